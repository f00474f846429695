use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::DType;
use serde::{Deserialize, Serialize};

use super::{Dataset, RunConfig};
use crate::corpus::{make_folds, split_supervised, split_weak, ClassId, FoldSplit, LabelRaster, LabelSource, SupervisedSplit, WeakSplit};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_reports, evaluate_pair, MetricReport};
use crate::segnet::{build_model, save_seg_checkpoint, train_supervised, train_weak, SegExample, SegModel, TrainState};
use crate::translator::{
    save_trans_checkpoint, train_translation, translate_then_segment, TransPair, TransState, TranslationModelPair,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakMode {
    /// Segment historical maps with a network trained on them against
    /// modern labels.
    Direct,
    /// Restyle historical maps as synthetic modern maps first and segment
    /// those with a network trained on synthetic maps.
    Translate,
}

impl std::fmt::Display for WeakMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Translate => "translate",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldRun {
    pub fold: usize,
    pub split: SupervisedSplit,
    pub best_epoch: usize,
    pub report: MetricReport,
}

pub struct CvOutcome {
    pub folds: FoldSplit,
    pub runs: Vec<FoldRun>,
    /// Pooled over all held-out tiles.
    pub aggregate: MetricReport,
    /// Held-out predictions of every fold.
    pub predictions: Vec<LabelRaster>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub split: WeakSplit,
    pub report: MetricReport,
}

/// Mean and sample standard deviation of one score across runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub mean: f64,
    pub std: f64,
}

impl Dispersion {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyAggregate);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self { mean, std })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub runs: usize,
    /// Only one run: the deviations are reported as 0.
    pub single_run: bool,
    pub oa: Dispersion,
    pub mean_diou: Dispersion,
    pub per_class_diou: BTreeMap<ClassId, Dispersion>,
}

impl SeedSummary {
    pub fn of(reports: &[&MetricReport]) -> Result<Self> {
        let pick = |f: &dyn Fn(&MetricReport) -> f64| Dispersion::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
        let first = reports.first().ok_or(Error::EmptyAggregate)?;
        let per_class_diou = first
            .per_class_diou
            .keys()
            .map(|&c| Ok((c, pick(&|r| r.per_class_diou.get(&c).copied().unwrap_or(0.0))?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            runs: reports.len(),
            single_run: reports.len() == 1,
            oa: pick(&|r| r.oa)?,
            mean_diou: pick(&|r| r.mean_diou)?,
            per_class_diou,
        })
    }
}

pub struct WeakOutcome {
    pub mode: WeakMode,
    pub runs: Vec<SeedRun>,
    pub summary: SeedSummary,
    /// Predictions on the annotated tiles, one set per seed.
    pub predictions: Vec<Vec<LabelRaster>>,
}

fn subdir(out: Option<&Path>, name: String) -> Result<Option<PathBuf>> {
    match out {
        Some(o) => {
            let d = o.join(name);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            Ok(Some(d))
        }
        None => Ok(None),
    }
}

/// Runs `job` for every item, on one thread each when `parallel` is set.
/// Results keep the input order.
fn fan_out<T: Sync, R: Send>(items: &[T], parallel: bool, job: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if !parallel {
        return items.iter().map(&job).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|it| s.spawn(|| job(it))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    })
}

fn examples(data: &Dataset, ids: &[String]) -> Result<Vec<SegExample>> {
    ids.iter()
        .map(|id| {
            Ok(SegExample {
                tile_id: id.clone(),
                image: data.get(id)?.tile.image.clone(),
                labels: data.historical_labels(id)?.clone(),
            })
        })
        .collect()
}

fn score(data: &Dataset, preds: &[LabelRaster], cfg: &RunConfig) -> Result<MetricReport> {
    let reports = preds
        .iter()
        .map(|p| {
            let truth = LabelRaster::new(p.tile_id.clone(), LabelSource::HistoricalManual, data.historical_labels(&p.tile_id)?.clone());
            evaluate_pair(p, &truth, &cfg.metric)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_reports(&reports)
}

fn write_predictions(dir: &Path, preds: &[LabelRaster]) -> Result<()> {
    let d = dir.join("predictions");
    std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    for p in preds {
        p.write_png(&d.join(format!("{}.png", p.tile_id)))?;
    }
    Ok(())
}

fn predict(model: &SegModel, data: &Dataset, ids: &[String], patch_px: usize) -> Result<Vec<LabelRaster>> {
    ids.iter()
        .map(|id| {
            Ok(LabelRaster::new(
                id.clone(),
                LabelSource::HistoricalManual,
                model.predict_image(&data.get(id)?.tile.image, patch_px)?,
            ))
        })
        .collect()
}

/// k-fold cross-validation on the annotated tiles with the first seed:
/// each fold is held out once, the rest split 80/20 into training and
/// validation. With `out`, each fold writes its checkpoint and held-out
/// predictions to `out/fold_<i>`.
pub fn run_supervised_cv(cfg: &RunConfig, data: &Dataset, out: Option<&Path>) -> Result<CvOutcome> {
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let folds = make_folds(&data.manifest, cfg.folds, seed)?;
    let patch = cfg.seg.crop_for(data.collection)?;
    let fold_ids: Vec<usize> = (0..cfg.folds).collect();
    let results = fan_out(&fold_ids, cfg.parallel, |&f| {
        let split = split_supervised(&folds, f, seed)?;
        let fold_seed = seed.wrapping_add(f as u64);
        let mut model = build_model(&cfg.seg, fold_seed)?;
        log::info!("fold {f}: {} train / {} val / {} test", split.train.len(), split.val.len(), split.test.len());
        let state = train_supervised(
            &mut model,
            &examples(data, &split.train)?,
            &examples(data, &split.val)?,
            data.collection,
            fold_seed,
        )?;
        let preds = predict(&model, data, &split.test, patch)?;
        let report = score(data, &preds, cfg)?;
        if let Some(dir) = subdir(out, format!("fold_{f}"))? {
            save_seg_checkpoint(&dir.join("segnet.safetensors"), &model, Some(&state))?;
            write_predictions(&dir, &preds)?;
        }
        Ok((
            FoldRun {
                fold: f,
                split,
                best_epoch: state.best_epoch,
                report,
            },
            preds,
        ))
    })?;
    let (runs, preds): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let aggregate = aggregate_reports(runs.iter().map(|r| &r.report))?;
    Ok(CvOutcome {
        folds,
        runs,
        aggregate,
        predictions: preds.into_iter().flatten().collect(),
    })
}

/// Trains the translator of one seed on the weak training pairs
/// (historical, synthetic modern).
pub fn train_weak_translator(
    cfg: &RunConfig,
    data: &Dataset,
    split: &WeakSplit,
    seed: u64,
) -> Result<(TranslationModelPair, TransState)> {
    let pairs = split
        .train
        .iter()
        .map(|id| {
            Ok(TransPair {
                tile_id: id.clone(),
                historical: data.get(id)?.tile.image.clone(),
                modern: data.synthetic_modern(id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = TranslationModelPair::new(&cfg.trans, seed, DType::F32)?;
    let state = train_translation(&mut model, &pairs, data.collection, &cfg.weights, seed)?;
    Ok((model, state))
}

fn weak_seed(cfg: &RunConfig, data: &Dataset, mode: WeakMode, seed: u64, out: Option<&Path>) -> Result<(SeedRun, Vec<LabelRaster>)> {
    let split = split_weak(&data.manifest, seed)?;
    let patch = cfg.seg.crop_for(data.collection)?;
    let mut all = split.train.clone();
    all.extend(split.val.iter().cloned());
    let labels = data.modern_label_map(&all)?;
    let annotated = data.annotated_ids();
    if annotated.is_empty() {
        return Err(Error::EmptySplit("no annotated tiles to evaluate on".into()));
    }
    let dir = subdir(out, format!("seed_{seed}"))?;
    let mut model = build_model(&cfg.seg, seed)?;
    let (state, preds): (TrainState, Vec<LabelRaster>) = match mode {
        WeakMode::Direct => {
            let state = train_weak(&mut model, &data.images(&all)?, &labels, &split, data.collection, seed)?;
            (state, predict(&model, data, &annotated, patch)?)
        }
        WeakMode::Translate => {
            let (pair, tstate) = train_weak_translator(cfg, data, &split, seed)?;
            if let Some(d) = &dir {
                save_trans_checkpoint(&d.join("translator.safetensors"), &pair, Some(&tstate))?;
            }
            let synthetic = all
                .iter()
                .map(|id| Ok((id.clone(), data.synthetic_modern(id)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let state = train_weak(&mut model, &synthetic, &labels, &split, data.collection, seed)?;
            let preds = annotated
                .iter()
                .map(|id| translate_then_segment(&pair, &model, &data.get(id)?.tile, patch))
                .collect::<Result<Vec<_>>>()?;
            (state, preds)
        }
    };
    let report = score(data, &preds, cfg)?;
    if let Some(d) = &dir {
        save_seg_checkpoint(&d.join("segnet.safetensors"), &model, Some(&state))?;
        write_predictions(d, &preds)?;
    }
    log::info!("{mode} seed {seed}: OA {:.4} mean dIoU {:.4}", report.oa, report.mean_diou);
    Ok((SeedRun { seed, split, report }, preds))
}

/// Weak supervision from modern labels, once per configured seed; scores
/// are taken on the annotated tiles, which never enter training.
pub fn run_weak(cfg: &RunConfig, data: &Dataset, mode: WeakMode, out: Option<&Path>) -> Result<WeakOutcome> {
    cfg.validate()?;
    let results = fan_out(&cfg.seeds, cfg.parallel, |&s| weak_seed(cfg, data, mode, s, out))?;
    let (runs, predictions): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summary = SeedSummary::of(&runs.iter().map(|r| &r.report).collect::<Vec<_>>())?;
    Ok(WeakOutcome {
        mode,
        runs,
        summary,
        predictions,
    })
}
