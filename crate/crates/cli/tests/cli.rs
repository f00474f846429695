use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use histmap::corpus::load_manifest;
use histmap::metrics::MetricReport;
use histmap::workflow::DensityMap;

fn histmap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histmap"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> PathBuf {
    let out = histmap(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    dir.join(stdout.lines().last().expect("run directory printed"))
}

const TINY: &str = r#"
profile = "toy"
seeds = [3]
folds = 2

[paths]
manifest = "runs/toygen/manifest.toml"
style = "runs/toygen/style.toml"

[toy]
n_tiles = 6
size_px = 24
annotated_fraction = 0.5

[seg]
stages = 2
base_channels = 2
max_channels = 4
epochs = 1
batch_size = 2

[seg.crop_px]
cassini = 16
etatmajor = 16
scan50 = 16
modern = 16

[trans]
max_steps = 2
gen_channels = 2
gen_blocks = 1
disc_channels = 2

[trans.crop_px]
cassini = 32
etatmajor = 32
scan50 = 32
modern = 32
"#;

fn setup() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.toml"), TINY).unwrap();
    let corpus = ok(tmp.path(), &["toygen", "--config", "run.toml", "--out", "runs"]);
    (tmp, corpus)
}

#[test]
fn missing_config_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = histmap(tmp.path(), &["make-folds"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn toygen_writes_a_loadable_corpus_and_freezes_its_config() {
    let (tmp, corpus) = setup();
    assert_eq!(corpus, tmp.path().join("runs/toygen"));
    let m = load_manifest(&corpus.join("manifest.toml")).unwrap();
    assert_eq!(m.len(), 6);
    assert_eq!(m.annotated_ids().len(), 3);
    let frozen = std::fs::read_to_string(corpus.join("config.toml")).unwrap();
    assert!(frozen.contains("n_tiles = 6"));

    let folds = ok(tmp.path(), &["make-folds", "--config", "run.toml", "--out", "runs"]);
    assert!(folds.join("folds.json").exists());
    assert!(folds.join("weak_split.json").exists());
    // a second run never overwrites the first
    let again = ok(tmp.path(), &["make-folds", "--config", "run.toml", "--out", "runs"]);
    assert_eq!(again, tmp.path().join("runs/make-folds-2"));
}

#[test]
fn perfect_predictions_evaluate_to_full_scores() {
    let (tmp, corpus) = setup();
    let preds = tmp.path().join("perfect");
    std::fs::create_dir_all(&preds).unwrap();
    for e in load_manifest(&corpus.join("manifest.toml")).unwrap().entries() {
        let labels = e.labels.get(&histmap::Collection::Cassini).or(e.labels.get(&histmap::Collection::Modern));
        std::fs::copy(corpus.join(labels.unwrap()), preds.join(format!("{}.png", e.tile_id))).unwrap();
    }
    let cfg = format!("{TINY}\n");
    let cfg = cfg.replace("[paths]\n", "[paths]\npredictions = \"perfect\"\n");
    std::fs::write(tmp.path().join("eval.toml"), cfg).unwrap();

    let ev = ok(tmp.path(), &["evaluate", "--config", "eval.toml", "--out", "runs"]);
    let r: MetricReport = serde_json::from_str(&std::fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(r.oa, 1.0);
    let table = std::fs::read_to_string(ev.join("table.md")).unwrap();
    assert!(table.contains("| evaluation | 100.0 |"), "{table}");

    let d = ok(tmp.path(), &["forest-density", "--config", "eval.toml", "--out", "runs"]);
    let map: DensityMap = serde_json::from_str(&std::fs::read_to_string(d.join("density.json")).unwrap()).unwrap();
    assert!(map.grid().iter().flatten().flatten().all(|f| (0.0..=1.0).contains(f)));
    assert!(d.join("density.png").exists() && d.join("density.csv").exists());

    let rep = ok(
        tmp.path(),
        &["report", "--config", "eval.toml", "--out", "runs", ev.join("report.json").to_str().unwrap()],
    );
    assert!(std::fs::read_to_string(rep.join("table.md")).unwrap().contains("100.0"));
}

#[test]
fn training_commands_produce_checkpoints_reports_and_predictions() {
    let (tmp, _) = setup();
    let cv = ok(tmp.path(), &["train-supervised", "--config", "run.toml", "--out", "runs"]);
    for f in 0..2 {
        assert!(cv.join(format!("fold_{f}/segnet.safetensors")).exists());
        assert!(cv.join(format!("fold_{f}/report.json")).exists());
    }
    assert!(cv.join("aggregate.json").exists());

    let weak = ok(
        tmp.path(),
        &["train-weak", "--mode", "translate", "--config", "run.toml", "--out", "runs", "--seed", "5", "--seed", "6"],
    );
    let summary = std::fs::read_to_string(weak.join("summary.json")).unwrap();
    assert!(summary.contains("\"runs\": 2"));
    assert!(weak.join("seed_6/translator.safetensors").exists());
    let frozen = std::fs::read_to_string(weak.join("config.toml")).unwrap();
    assert!(frozen.contains("seeds = [\n    5,\n    6,\n]") || frozen.contains("seeds = [5, 6]"), "{frozen}");

    let seg = weak.join("seed_5/segnet.safetensors");
    let trans = weak.join("seed_5/translator.safetensors");
    let cfg = TINY.replace(
        "[paths]\n",
        &format!("[paths]\ncheckpoint = {:?}\ntranslator = {:?}\n", seg.to_str().unwrap(), trans.to_str().unwrap()),
    );
    std::fs::write(tmp.path().join("infer.toml"), cfg).unwrap();
    let inf = ok(tmp.path(), &["infer", "--config", "infer.toml", "--out", "runs"]);
    assert_eq!(std::fs::read_dir(inf.join("predictions")).unwrap().count(), 6);
    let pv = ok(tmp.path(), &["preview", "--tiles", "2", "--config", "infer.toml", "--out", "runs"]);
    assert!(pv.join("preview.png").exists());

    let tr = ok(tmp.path(), &["train-translate", "--config", "run.toml", "--out", "runs"]);
    assert!(tr.join("seed_3/translator.safetensors").exists());
}

#[test]
fn stylize_renders_labels_and_synthetic_maps() {
    let (tmp, corpus) = setup();
    let m = load_manifest(&corpus.join("manifest.toml")).unwrap();
    let e = &m.entries()[0];
    let (x, y) = (e.centroid_x_m, e.centroid_y_m);
    let features = format!(
        "forest - POLYGON (({a} {b}, {c} {b}, {c} {d}, {a} {d}, {a} {b}))\n",
        a = x - 2000.0,
        b = y - 2000.0,
        c = x + 2000.0,
        d = y + 2000.0
    );
    std::fs::write(tmp.path().join("features.wkt"), features).unwrap();
    let cfg = TINY.replace("[paths]\n", "[paths]\nfeatures = \"features.wkt\"\n");
    std::fs::write(tmp.path().join("sty.toml"), cfg).unwrap();
    let st = ok(tmp.path(), &["stylize", "--config", "sty.toml", "--out", "runs"]);
    let out = load_manifest(&st.join("manifest.toml")).unwrap();
    assert_eq!(out.len(), 6);
    let labels = histmap::LabelRaster::read_png(
        &e.tile_id,
        histmap::LabelSource::ModernVector,
        &out.resolve(&out.entry(&e.tile_id).unwrap().labels[&histmap::Collection::Modern]),
    )
    .unwrap();
    assert!(labels.data.data().iter().all(|&c| c == histmap::ClassId::Forest));
    assert!(st.join(format!("synthetic/{}.png", e.tile_id)).exists());
}
