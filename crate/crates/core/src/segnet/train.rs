use std::collections::BTreeMap;

use candle_core::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{labels_to_tensor, random_resized_crop, seg_loss, SegModel};
use crate::corpus::{ClassId, Collection, LabelRaster, LabelSource, WeakSplit};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_reports, evaluate_pair, MetricReport};
use crate::nn::{self, poly_lr, Optimizer, Sgd};
use crate::raster::{Raster, Rgb};

/// One image with its training target.
#[derive(Clone, Debug, PartialEq)]
pub struct SegExample {
    pub tile_id: String,
    pub image: Raster<Rgb>,
    pub labels: Raster<ClassId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_score: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainState {
    /// Epochs run.
    pub epoch: usize,
    pub best_epoch: usize,
    /// Highest recorded validation score (the initial score when no epoch
    /// ran); `None` without validation data.
    pub best_val_score: Option<f64>,
    /// Mean dIoU of the untrained model on the validation set.
    pub initial_val_score: Option<f64>,
    pub rng_seed: u64,
    pub loss_history: Vec<EpochRecord>,
    /// Set when there was nothing to validate on and the last epoch was
    /// kept instead of the best one.
    pub no_validation: bool,
    #[serde(skip)]
    pub best_parameters: Vec<Tensor>,
}

/// Scores `model` on `examples` with the configured validation metric.
pub fn evaluate_examples(model: &SegModel, examples: &[SegExample], patch_px: usize) -> Result<MetricReport> {
    let cfg = &model.config.validation;
    let reports = examples
        .iter()
        .map(|e| {
            let pred = model.predict_image(&e.image, patch_px)?;
            evaluate_pair(
                &LabelRaster::new(e.tile_id.clone(), LabelSource::HistoricalManual, pred),
                &LabelRaster::new(e.tile_id.clone(), LabelSource::HistoricalManual, e.labels.clone()),
                cfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_reports(&reports)
}

/// Minibatch training on random resized crops with SGD and a polynomial
/// learning-rate decay. After each epoch the model is scored on `val`
/// (mean dIoU); the best epoch's parameters are restored at the end.
pub fn train_supervised(
    model: &mut SegModel,
    train: &[SegExample],
    val: &[SegExample],
    collection: Collection,
    seed: u64,
) -> Result<TrainState> {
    train_with_callback(model, train, val, collection, seed, |_| {})
}

pub fn train_with_callback(
    model: &mut SegModel,
    train: &[SegExample],
    val: &[SegExample],
    collection: Collection,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainState> {
    if train.is_empty() {
        return Err(Error::EmptySplit("no training tiles".into()));
    }
    let cfg = model.config.clone();
    let crop = cfg.crop_for(collection)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Sgd::new(model.params().vars().to_vec(), cfg.momentum, true, cfg.weight_decay);

    let initial_val_score = if val.is_empty() {
        None
    } else {
        Some(evaluate_examples(model, val, crop)?.mean_diou)
    };
    let mut state = TrainState {
        epoch: 0,
        best_epoch: 0,
        best_val_score: None,
        initial_val_score,
        rng_seed: seed,
        loss_history: Vec::new(),
        no_validation: val.is_empty(),
        best_parameters: model.params().snapshot()?,
    };
    if val.is_empty() {
        log::warn!("empty validation set: keeping the last epoch");
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let lr = poly_lr(cfg.learning_rate, (epoch - 1) as f64 / cfg.epochs as f64, cfg.lr_decay_power);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let (images, labels): (Vec<_>, Vec<_>) = chunk
                .iter()
                .map(|&i| random_resized_crop(&train[i].image, &train[i].labels, crop, cfg.scale_range, &mut rng))
                .unzip();
            let x = nn::images_to_tensor(&images.iter().collect::<Vec<_>>(), model.dtype())?;
            let y = labels_to_tensor(&labels.iter().collect::<Vec<_>>())?;
            let loss = seg_loss(&model.forward(&x)?, &y, cfg.dice_smooth)?;
            let grads = loss.backward()?;
            opt.step(&grads, lr)?;
            loss_sum += loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            batches += 1;
        }
        let val_score = if val.is_empty() {
            None
        } else {
            Some(evaluate_examples(model, val, crop)?.mean_diou)
        };
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_score,
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4} val {}",
            cfg.epochs,
            rec.train_loss,
            val_score.map_or("-".to_string(), |v| format!("{v:.4}"))
        );
        on_epoch(&rec);
        state.loss_history.push(rec);
        state.epoch = epoch;
        match val_score {
            Some(v) if state.best_val_score.is_none_or(|b| v > b) => {
                state.best_val_score = Some(v);
                state.best_epoch = epoch;
                state.best_parameters = model.params().snapshot()?;
            }
            None => {
                state.best_epoch = epoch;
                state.best_parameters = model.params().snapshot()?;
            }
            _ => {}
        }
    }
    if state.epoch == 0 {
        state.best_val_score = initial_val_score;
    }
    model.params().restore(&state.best_parameters)?;
    Ok(state)
}

/// Pairs each historical image with its modern label raster.
pub fn pair_weak(
    images: &BTreeMap<String, Raster<Rgb>>,
    labels: &BTreeMap<String, Raster<ClassId>>,
    ids: impl IntoIterator<Item = impl AsRef<str>>,
) -> Result<Vec<SegExample>> {
    ids.into_iter()
        .map(|id| {
            let id = id.as_ref();
            let image = images
                .get(id)
                .ok_or_else(|| Error::Pairing(format!("tile `{id}` has no historical image")))?;
            let l = labels
                .get(id)
                .ok_or_else(|| Error::Pairing(format!("tile `{id}` has no aligned modern label raster")))?;
            l.ensure_shape(image.shape())?;
            Ok(SegExample {
                tile_id: id.to_string(),
                image: image.clone(),
                labels: l.clone(),
            })
        })
        .collect()
}

/// Trains on historical images with modern labels as targets; validation
/// is against the modern labels of the held-out unannotated tiles.
pub fn train_weak(
    model: &mut SegModel,
    images: &BTreeMap<String, Raster<Rgb>>,
    modern_labels: &BTreeMap<String, Raster<ClassId>>,
    split: &WeakSplit,
    collection: Collection,
    seed: u64,
) -> Result<TrainState> {
    if let Some(id) = images.keys().find(|id| !modern_labels.contains_key(*id)) {
        return Err(Error::Pairing(format!("tile `{id}` has no aligned modern label raster")));
    }
    let train = pair_weak(images, modern_labels, &split.train)?;
    let val = pair_weak(images, modern_labels, &split.val)?;
    train_supervised(model, &train, &val, collection, seed)
}
