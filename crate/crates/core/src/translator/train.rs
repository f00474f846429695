use std::collections::BTreeMap;

use candle_core::{DType, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generator_objective, lsgan_disc, GeneratorPass, LossWeights, TranslationModelPair};
use crate::corpus::Collection;
use crate::error::{Error, Result};
use crate::nn::{self, Adam, Optimizer};
use crate::raster::{Raster, Rgb};
use crate::segnet::{resample_image, sample_window};

/// A historical image and the modern rendering of the same footprint.
#[derive(Clone, Debug, PartialEq)]
pub struct TransPair {
    pub tile_id: String,
    pub historical: Raster<Rgb>,
    pub modern: Raster<Rgb>,
}

/// Matches the two domains by tile id.
pub fn pair_domains(
    historical: &BTreeMap<String, Raster<Rgb>>,
    modern: &BTreeMap<String, Raster<Rgb>>,
) -> Result<Vec<TransPair>> {
    if historical.is_empty() || modern.is_empty() {
        return Err(Error::Data("translation needs images in both domains".into()));
    }
    historical
        .iter()
        .map(|(id, h)| {
            let m = modern
                .get(id)
                .ok_or_else(|| Error::Pairing(format!("tile `{id}` has no modern rendering")))?;
            m.ensure_shape(h.shape())?;
            Ok(TransPair {
                tile_id: id.clone(),
                historical: h.clone(),
                modern: m.clone(),
            })
        })
        .collect()
}

/// Losses of one generator/discriminator update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub gan: f64,
    pub cycle: f64,
    pub identity: f64,
    pub translation: f64,
    pub generator: f64,
    pub discriminator: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransState {
    /// Generator updates performed.
    pub step: usize,
    pub epoch: usize,
    pub weights: LossWeights,
    pub rng_seed: u64,
    /// Per-epoch means of the step records.
    pub history: Vec<StepRecord>,
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Total generator updates for `n` pairs under `model.config`.
pub fn planned_steps(model: &TranslationModelPair, n: usize) -> usize {
    let cfg = &model.config;
    let per_epoch = n.div_ceil(cfg.batch_size.max(1));
    let total = cfg.epochs * per_epoch;
    cfg.max_steps.map_or(total, |m| m.min(total))
}

pub fn train_translation(
    model: &mut TranslationModelPair,
    pairs: &[TransPair],
    collection: Collection,
    weights: &LossWeights,
    seed: u64,
) -> Result<TransState> {
    train_translation_with_callback(model, pairs, collection, weights, seed, |_| {})
}

/// Alternating Adam updates: both generators on the weighted objective,
/// then both discriminators on real images against the fakes of the same
/// batch. Each aligned pair shares one random crop.
pub fn train_translation_with_callback(
    model: &mut TranslationModelPair,
    pairs: &[TransPair],
    collection: Collection,
    weights: &LossWeights,
    seed: u64,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TransState> {
    weights.validate()?;
    if pairs.is_empty() {
        return Err(Error::Data("no training pairs for translation".into()));
    }
    let cfg = model.config.clone();
    cfg.validate()?;
    let crop = cfg.crop_for(collection)?;
    let dtype = model.dtype();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gen_vars = [model.gen_xy.params().vars(), model.gen_yx.params().vars()].concat();
    let disc_vars = [model.disc_x.params().vars(), model.disc_y.params().vars()].concat();
    let mut gen_opt = Adam::new(gen_vars, cfg.beta1, cfg.beta2);
    let mut disc_opt = Adam::new(disc_vars, cfg.beta1, cfg.beta2);
    let total = planned_steps(model, pairs.len());
    let with_identity = weights.lambda_id > 0.0;

    let mut state = TransState {
        step: 0,
        epoch: 0,
        weights: *weights,
        rng_seed: seed,
        history: Vec::new(),
    };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    while state.step < total {
        order.shuffle(&mut rng);
        let mut sums = StepRecord {
            step: 0,
            gan: 0.0,
            cycle: 0.0,
            identity: 0.0,
            translation: 0.0,
            generator: 0.0,
            discriminator: 0.0,
        };
        let mut n = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if state.step >= total {
                break;
            }
            let (xs, ys): (Vec<_>, Vec<_>) = chunk
                .iter()
                .map(|&i| {
                    let p = &pairs[i];
                    let win = sample_window(p.historical.shape(), crop, cfg.scale_range, &mut rng);
                    (resample_image(&p.historical, &win), resample_image(&p.modern, &win))
                })
                .unzip();
            let x = nn::images_to_tensor(&xs.iter().collect::<Vec<_>>(), dtype)?;
            let y = nn::images_to_tensor(&ys.iter().collect::<Vec<_>>(), dtype)?;

            let pass = GeneratorPass::run(&model.gen_xy, &model.gen_yx, &x, &y, with_identity)?;
            let terms = pass.terms(&x, &y, &model.disc_y.forward(&pass.fake_y)?, &model.disc_x.forward(&pass.fake_x)?)?;
            let g_loss = generator_objective(&terms, weights)?;
            gen_opt.step(&g_loss.backward()?, cfg.learning_rate)?;

            let (fake_y, fake_x) = (pass.fake_y.detach(), pass.fake_x.detach());
            let d_y = lsgan_disc(&model.disc_y.forward(&y)?, &model.disc_y.forward(&fake_y)?)?;
            let d_x = lsgan_disc(&model.disc_x.forward(&x)?, &model.disc_x.forward(&fake_x)?)?;
            let d_loss = (d_y + d_x)?;
            disc_opt.step(&d_loss.backward()?, cfg.learning_rate)?;

            state.step += 1;
            let rec = StepRecord {
                step: state.step,
                gan: scalar(&terms.gan)?,
                cycle: scalar(&terms.cycle)?,
                identity: scalar(&terms.identity)?,
                translation: scalar(&terms.translation)?,
                generator: scalar(&g_loss)?,
                discriminator: scalar(&d_loss)?,
            };
            on_step(&rec);
            sums.gan += rec.gan;
            sums.cycle += rec.cycle;
            sums.identity += rec.identity;
            sums.translation += rec.translation;
            sums.generator += rec.generator;
            sums.discriminator += rec.discriminator;
            n += 1;
        }
        state.epoch += 1;
        let k = n.max(1) as f64;
        let mean = StepRecord {
            step: state.step,
            gan: sums.gan / k,
            cycle: sums.cycle / k,
            identity: sums.identity / k,
            translation: sums.translation / k,
            generator: sums.generator / k,
            discriminator: sums.discriminator / k,
        };
        log::info!(
            "translation epoch {} (step {}/{total}): G {:.4} D {:.4} tran {:.4}",
            state.epoch,
            state.step,
            mean.generator,
            mean.discriminator,
            mean.translation
        );
        state.history.push(mean);
    }
    Ok(state)
}
