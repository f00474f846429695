use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use histmap::corpus::{load_manifest, make_folds, save_manifest, split_weak, LabelRaster, LabelSource, Manifest};
use histmap::metrics::{aggregate_reports, evaluate_pair, MetricReport};
use histmap::segnet::{load_seg_checkpoint, predict_tile};
use histmap::stylizer::{adapt_lod, colorize, rasterize, read_features, StyleSpec};
use histmap::toygen::{generate_corpus, toy_style, write_corpus};
use histmap::translator::{load_trans_checkpoint, preview_grid, save_trans_checkpoint, translate_image, translate_then_segment};
use histmap::workflow::{
    forest_density, report_table, run_supervised_cv, run_weak, summary_table, train_weak_translator, Dataset, Profile,
    RunConfig, WeakMode, Workflow,
};
use histmap::{Collection, Georef, Raster, Tile};

#[derive(Parser)]
#[command(name = "histmap", version, about = "Land-cover segmentation of historical maps")]
struct Cli {
    /// Run configuration (TOML), layered over the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the configured seeds; repeat for several.
    #[arg(long = "seed", global = true)]
    seeds: Vec<u64>,
    /// Parent of the run directory (default: paths.output, then `runs`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "paper")]
    profile: Profile,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural corpus with aligned historical and modern maps.
    Toygen,
    /// Rasterize vector features into modern labels and synthetic maps.
    Stylize,
    /// Assign annotated tiles to spatial folds and split the rest for weak supervision.
    MakeFolds,
    /// Cross-validate the supervised baseline on the annotated tiles.
    TrainSupervised,
    /// Weak supervision from modern labels, averaged over seeds.
    TrainWeak {
        /// Defaults to `translate` when the config's workflow is `weak_translate`.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Train historical → modern translators on the weak training pairs.
    TrainTranslate,
    /// Label every tile with a trained segmentation checkpoint.
    Infer,
    /// Score a directory of predictions against the annotated tiles.
    Evaluate,
    /// Forest share per grid cell from a directory of predictions.
    ForestDensity,
    /// Render report JSON files as one table.
    Report { reports: Vec<PathBuf> },
    /// Side-by-side historical / translated images for a few tiles.
    Preview {
        #[arg(long, default_value_t = 4)]
        tiles: usize,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Direct,
    Translate,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Toygen => "toygen",
            Command::Stylize => "stylize",
            Command::MakeFolds => "make-folds",
            Command::TrainSupervised => "train-supervised",
            Command::TrainWeak { .. } => "train-weak",
            Command::TrainTranslate => "train-translate",
            Command::Infer => "infer",
            Command::Evaluate => "evaluate",
            Command::ForestDensity => "forest-density",
            Command::Report { .. } => "report",
            Command::Preview { .. } => "preview",
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let Some(config_path) = &cli.config else {
        bail!("--config is required");
    };
    let mut cfg = RunConfig::load(cli.profile, config_path)?;
    if !cli.seeds.is_empty() {
        cfg.seeds = cli.seeds.clone();
    }
    cfg.validate()?;
    let parent = cli
        .out
        .clone()
        .or_else(|| cfg.paths.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let dir = run_dir(&parent, cli.command.name())?;
    write(&dir.join("config.toml"), cfg.to_toml())?;
    log::info!("writing to {}", dir.display());

    match &cli.command {
        Command::Toygen => toygen(&cfg, &dir),
        Command::Stylize => stylize(&cfg, &dir),
        Command::MakeFolds => make_folds_cmd(&cfg, &dir),
        Command::TrainSupervised => train_supervised(&cfg, &dir),
        Command::TrainWeak { mode } => {
            let mode = match mode {
                Some(Mode::Direct) => WeakMode::Direct,
                Some(Mode::Translate) => WeakMode::Translate,
                None if cfg.workflow == Some(Workflow::WeakTranslate) => WeakMode::Translate,
                None => WeakMode::Direct,
            };
            train_weak(&cfg, &dir, mode)
        }
        Command::TrainTranslate => train_translate(&cfg, &dir),
        Command::Infer => infer(&cfg, &dir),
        Command::Evaluate => evaluate(&cfg, &dir),
        Command::ForestDensity => density(&cfg, &dir),
        Command::Report { reports } => report(reports, &dir),
        Command::Preview { tiles } => preview(&cfg, &dir, *tiles),
    }?;
    println!("{}", dir.display());
    Ok(())
}

/// `parent/name`, or `parent/name-2`, `-3`, ... when taken.
fn run_dir(parent: &Path, name: &str) -> Result<PathBuf> {
    let mut dir = parent.join(name);
    let mut i = 2;
    while dir.exists() {
        dir = parent.join(format!("{name}-{i}"));
        i += 1;
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)?)
}

fn manifest(cfg: &RunConfig) -> Result<Manifest> {
    Ok(load_manifest(cfg.require(&cfg.paths.manifest, "manifest")?)?)
}

fn style(cfg: &RunConfig) -> Result<StyleSpec> {
    Ok(match &cfg.paths.style {
        Some(p) => StyleSpec::load(p)?,
        None => StyleSpec::default_for(cfg.collection),
    })
}

fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    Ok(Dataset::load(&manifest(cfg)?, cfg.collection, style(cfg)?.palette)?)
}

fn toygen(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let corpus = generate_corpus(&cfg.toy)?;
    let m = write_corpus(&corpus, dir)?;
    write(&dir.join("style.toml"), toy_style().to_toml())?;
    log::info!("{} tiles, {} annotated", m.len(), m.annotated_ids().len());
    Ok(())
}

/// Writes modern label rasters and synthetic maps for every tile of the
/// configured collection, and a manifest that references them.
fn stylize(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let m = manifest(cfg)?;
    let spec = style(cfg)?;
    let features = adapt_lod(&read_features(cfg.require(&cfg.paths.features, "features")?)?, &spec);
    let mut entries = Vec::new();
    for e in m.entries() {
        let mut e = e.clone();
        let abs = |p: &Path| std::path::absolute(m.resolve(p));
        for p in e.images.values_mut().chain(e.labels.values_mut()) {
            *p = abs(p)?;
        }
        e.georef = e.georef.as_deref().map(abs).transpose()?;
        let Some(img) = e.images.get(&cfg.collection).cloned() else {
            entries.push(e);
            continue;
        };
        let (w, h) = image_size(&img)?;
        let georef = match &e.georef {
            Some(p) => Georef::read_world_file(p)?,
            None => bail!("tile `{}` has no georeference", e.tile_id),
        };
        let tile = Tile::new(e.tile_id.clone(), cfg.collection, Raster::filled(h, w, [0u8; 3]), georef)?;
        let labels = rasterize(&features, &tile, &spec);
        let lp = PathBuf::from(format!("labels/modern/{}.png", e.tile_id));
        let sp = PathBuf::from(format!("synthetic/{}.png", e.tile_id));
        ensure_parent(&dir.join(&lp))?;
        ensure_parent(&dir.join(&sp))?;
        labels.write_png(&dir.join(&lp))?;
        colorize(&labels, &spec.palette)?.write_png(&dir.join(&sp))?;
        e.labels.insert(Collection::Modern, lp);
        entries.push(e);
    }
    save_manifest(&Manifest::new(dir, entries)?, &dir.join("manifest.toml"))?;
    Ok(())
}

fn image_size(path: &Path) -> Result<(usize, usize)> {
    let img = Raster::<histmap::Rgb>::read_png(path)?;
    Ok((img.width(), img.height()))
}

fn make_folds_cmd(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let m = manifest(cfg)?;
    let seed = cfg.seeds[0];
    let folds = make_folds(&m, cfg.folds, seed)?;
    write_json(&dir.join("folds.json"), &folds)?;
    match split_weak(&m, seed) {
        Ok(w) => write_json(&dir.join("weak_split.json"), &w)?,
        Err(e) => log::warn!("no weak split: {e}"),
    }
    log::info!("fold sizes {:?}", folds.fold_sizes());
    Ok(())
}

fn write_report(dir: &Path, name: &str, r: &MetricReport) -> Result<()> {
    write(&dir.join(format!("{name}.json")), r.to_json())
}

fn train_supervised(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let data = dataset(cfg)?;
    let out = run_supervised_cv(cfg, &data, Some(dir))?;
    write_json(&dir.join("folds.json"), &out.folds)?;
    let mut rows = Vec::new();
    for r in &out.runs {
        write_report(&dir.join(format!("fold_{}", r.fold)), "report", &r.report)?;
        write_json(&dir.join(format!("fold_{}/split.json", r.fold)), &r.split)?;
        rows.push((format!("fold {}", r.fold), &r.report));
    }
    write_report(dir, "aggregate", &out.aggregate)?;
    rows.push(("aggregate".to_string(), &out.aggregate));
    let table = report_table(&rows)?;
    write(&dir.join("table.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn train_weak(cfg: &RunConfig, dir: &Path, mode: WeakMode) -> Result<()> {
    let data = dataset(cfg)?;
    let out = run_weak(cfg, &data, mode, Some(dir))?;
    let mut rows = Vec::new();
    for r in &out.runs {
        let d = dir.join(format!("seed_{}", r.seed));
        write_report(&d, "report", &r.report)?;
        write_json(&d.join("split.json"), &r.split)?;
        rows.push((format!("{mode} seed {}", r.seed), &r.report));
    }
    write_json(&dir.join("summary.json"), &out.summary)?;
    let table = format!(
        "{}\n{}",
        report_table(&rows)?,
        summary_table(&[(mode.to_string(), &out.summary)])?
    );
    write(&dir.join("table.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn train_translate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let data = dataset(cfg)?;
    for &seed in &cfg.seeds {
        let split = split_weak(&data.manifest, seed)?;
        let (pair, state) = train_weak_translator(cfg, &data, &split, seed)?;
        let d = dir.join(format!("seed_{seed}"));
        std::fs::create_dir_all(&d)?;
        save_trans_checkpoint(&d.join("translator.safetensors"), &pair, Some(&state))?;
        write_json(&d.join("history.json"), &state.history)?;
    }
    Ok(())
}

fn infer(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let data = dataset(cfg)?;
    let seg = load_seg_checkpoint(cfg.require(&cfg.paths.checkpoint, "checkpoint")?)?.model;
    let trans = cfg.paths.translator.as_deref().map(load_trans_checkpoint).transpose()?;
    let patch = cfg.seg.crop_for(data.collection)?;
    for t in data.tiles.values() {
        let pred = match &trans {
            Some(tc) => translate_then_segment(&tc.model, &seg, &t.tile, patch)?,
            None => predict_tile(&seg, &t.tile, patch)?,
        };
        let p = dir.join(format!("predictions/{}.png", t.tile.tile_id));
        ensure_parent(&p)?;
        pred.write_png(&p)?;
    }
    Ok(())
}

fn read_predictions(cfg: &RunConfig, ids: impl Iterator<Item = String>) -> Result<BTreeMap<String, LabelRaster>> {
    let root = cfg.require(&cfg.paths.predictions, "predictions")?;
    let mut out = BTreeMap::new();
    for id in ids {
        let p = root.join(format!("{id}.png"));
        if p.exists() {
            out.insert(id.clone(), LabelRaster::read_png(&id, LabelSource::HistoricalManual, &p)?);
        }
    }
    Ok(out)
}

fn evaluate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let data = dataset(cfg)?;
    let ids = data.annotated_ids();
    let preds = read_predictions(cfg, ids.iter().cloned())?;
    if preds.len() < ids.len() {
        bail!("{} of {} annotated tiles have no prediction", ids.len() - preds.len(), ids.len());
    }
    let reports = ids
        .iter()
        .map(|id| {
            let truth = LabelRaster::new(id.clone(), LabelSource::HistoricalManual, data.historical_labels(id)?.clone());
            Ok(evaluate_pair(&preds[id], &truth, &cfg.metric)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = aggregate_reports(&reports)?;
    write_report(dir, "report", &total)?;
    let table = report_table(&[("evaluation".to_string(), &total)])?;
    write(&dir.join("table.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn density(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let data = dataset(cfg)?;
    let preds = read_predictions(cfg, data.tiles.keys().cloned())?;
    let pairs: Vec<_> = preds
        .into_iter()
        .map(|(id, p)| (p, data.tiles[&id].tile.georef))
        .collect();
    let map = forest_density(&pairs, cfg.density.cell_size_km, cfg.collection)?;
    write(&dir.join("density.csv"), map.to_csv())?;
    write_json(&dir.join("density.json"), &map)?;
    map.render(cfg.density.cell_px).write_png(&dir.join("density.png"))?;
    Ok(())
}

fn report(paths: &[PathBuf], dir: &Path) -> Result<()> {
    if paths.is_empty() {
        bail!("no report files given");
    }
    let reports = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let r: MetricReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            Ok((p.display().to_string(), r))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    let table = report_table(&rows)?;
    write(&dir.join("table.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn preview(cfg: &RunConfig, dir: &Path, n: usize) -> Result<()> {
    let data = dataset(cfg)?;
    let tc = load_trans_checkpoint(cfg.require(&cfg.paths.translator, "translator")?)?;
    let patch = cfg.seg.crop_for(data.collection)?;
    let rows = data
        .tiles
        .values()
        .take(n)
        .map(|t| Ok((t.tile.image.clone(), translate_image(&tc.model.gen_xy, &t.tile.image, patch)?)))
        .collect::<Result<Vec<_>>>()?;
    preview_grid(&rows)?.write_png(&dir.join("preview.png"))?;
    Ok(())
}
