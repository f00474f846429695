use candle_core::Tensor;

use super::{LossWeights, Translator};
use crate::error::{Error, Result};

/// Mean absolute difference.
pub fn l1(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok((a - b)?.abs()?.mean_all()?)
}

fn mean_sq_from(scores: &Tensor, target: f64) -> Result<Tensor> {
    Ok(scores.affine(1.0, -target)?.sqr()?.mean_all()?)
}

/// Generator half of the least-squares adversarial loss.
pub fn lsgan_gen(fake_scores: &Tensor) -> Result<Tensor> {
    mean_sq_from(fake_scores, 1.0)
}

/// Discriminator half of the least-squares adversarial loss.
pub fn lsgan_disc(real_scores: &Tensor, fake_scores: &Tensor) -> Result<Tensor> {
    Ok((mean_sq_from(real_scores, 1.0)? + mean_sq_from(fake_scores, 0.0)?)?)
}

/// `(generator term, discriminator term)` of the least-squares GAN loss
/// from discriminator scores on real and generated images.
pub fn adversarial_loss(real_scores: &Tensor, fake_scores: &Tensor) -> Result<(Tensor, Tensor)> {
    if real_scores.dims() != fake_scores.dims() {
        return Err(Error::Data(format!(
            "score grids differ in shape: {:?} vs {:?}",
            real_scores.dims(),
            fake_scores.dims()
        )));
    }
    Ok((lsgan_gen(fake_scores)?, lsgan_disc(real_scores, fake_scores)?))
}

/// `|G_yx(G_xy(x)) − x| + |G_xy(G_yx(y)) − y|`, each averaged.
pub fn cycle_loss(gen_xy: &impl Translator, gen_yx: &impl Translator, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let rx = gen_yx.translate(&gen_xy.translate(x)?)?;
    let ry = gen_xy.translate(&gen_yx.translate(y)?)?;
    Ok((l1(&rx, x)? + l1(&ry, y)?)?)
}

/// `|G_xy(y) − y| + |G_yx(x) − x|`, each averaged.
pub fn identity_loss(gen_xy: &impl Translator, gen_yx: &impl Translator, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    Ok((l1(&gen_xy.translate(y)?, y)? + l1(&gen_yx.translate(x)?, x)?)?)
}

/// A batch of images from both domains; `x_ids[i]` and `y_ids[i]` name the
/// footprint of sample `i` on each side.
#[derive(Clone, Debug)]
pub struct AlignedBatch {
    pub x_ids: Vec<String>,
    pub y_ids: Vec<String>,
    pub x: Tensor,
    pub y: Tensor,
}

impl AlignedBatch {
    pub fn ensure_aligned(&self) -> Result<()> {
        if self.x_ids.len() != self.y_ids.len() {
            return Err(Error::Pairing(format!(
                "batch has {} historical and {} modern samples",
                self.x_ids.len(),
                self.y_ids.len()
            )));
        }
        if let Some((a, b)) = self.x_ids.iter().zip(&self.y_ids).find(|(a, b)| a != b) {
            return Err(Error::Pairing(format!("historical tile `{a}` is paired with modern tile `{b}`")));
        }
        if self.x.dims() != self.y.dims() {
            return Err(Error::Pairing(format!("image shapes differ: {:?} vs {:?}", self.x.dims(), self.y.dims())));
        }
        Ok(())
    }
}

/// `|G_yx(y) − x| + |G_xy(x) − y|` over aligned pairs: each generator is
/// pulled toward the other domain's rendering of the same footprint.
pub fn translation_loss(gen_xy: &impl Translator, gen_yx: &impl Translator, batch: &AlignedBatch) -> Result<Tensor> {
    batch.ensure_aligned()?;
    let (x, y) = (&batch.x, &batch.y);
    Ok((l1(&gen_yx.translate(y)?, x)? + l1(&gen_xy.translate(x)?, y)?)?)
}

/// Values that can be combined as `self + w · other`.
pub trait LossValue: Sized {
    fn add_scaled(&self, other: &Self, w: f64) -> Result<Self>;
}

impl LossValue for f64 {
    fn add_scaled(&self, other: &Self, w: f64) -> Result<Self> {
        Ok(self + w * other)
    }
}

impl LossValue for Tensor {
    fn add_scaled(&self, other: &Self, w: f64) -> Result<Self> {
        Ok((self + other.affine(w, 0.0)?)?)
    }
}

/// The four generator loss components, each already summed over both
/// translation directions.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorTerms<T> {
    pub gan: T,
    pub cycle: T,
    pub identity: T,
    pub translation: T,
}

/// `gan + λ_cyc·cycle + λ_id·identity + λ_tran·translation`, accumulated
/// left to right.
pub fn generator_objective<T: LossValue>(terms: &GeneratorTerms<T>, weights: &LossWeights) -> Result<T> {
    weights.validate()?;
    terms
        .gan
        .add_scaled(&terms.cycle, weights.lambda_cyc)?
        .add_scaled(&terms.identity, weights.lambda_id)?
        .add_scaled(&terms.translation, weights.lambda_tran)
}

/// Every generator output needed for one objective evaluation.
pub struct GeneratorPass {
    pub fake_y: Tensor,
    pub fake_x: Tensor,
    pub rec_x: Tensor,
    pub rec_y: Tensor,
    pub same_y: Option<Tensor>,
    pub same_x: Option<Tensor>,
}

impl GeneratorPass {
    /// Runs the generators once per output; the identity pair is skipped
    /// when `with_identity` is false.
    pub fn run(gen_xy: &impl Translator, gen_yx: &impl Translator, x: &Tensor, y: &Tensor, with_identity: bool) -> Result<Self> {
        let fake_y = gen_xy.translate(x)?;
        let fake_x = gen_yx.translate(y)?;
        let rec_x = gen_yx.translate(&fake_y)?;
        let rec_y = gen_xy.translate(&fake_x)?;
        let (same_y, same_x) = if with_identity {
            (Some(gen_xy.translate(y)?), Some(gen_yx.translate(x)?))
        } else {
            (None, None)
        };
        Ok(Self {
            fake_y,
            fake_x,
            rec_x,
            rec_y,
            same_y,
            same_x,
        })
    }

    /// The loss components given the discriminators' scores on the fakes.
    pub fn terms(&self, x: &Tensor, y: &Tensor, score_fake_y: &Tensor, score_fake_x: &Tensor) -> Result<GeneratorTerms<Tensor>> {
        let zero = || Tensor::zeros((), x.dtype(), x.device());
        let identity = match (&self.same_y, &self.same_x) {
            (Some(sy), Some(sx)) => (l1(sy, y)? + l1(sx, x)?)?,
            _ => zero()?,
        };
        Ok(GeneratorTerms {
            gan: (lsgan_gen(score_fake_y)? + lsgan_gen(score_fake_x)?)?,
            cycle: (l1(&self.rec_x, x)? + l1(&self.rec_y, y)?)?,
            identity,
            translation: (l1(&self.fake_x, x)? + l1(&self.fake_y, y)?)?,
        })
    }
}
