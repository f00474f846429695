use candle_core::{DType, Device, Tensor};

use crate::corpus::{ClassId, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Stacks label rasters into a `[b, h, w]` class-index tensor.
pub fn labels_to_tensor(labels: &[&Raster<ClassId>]) -> Result<Tensor> {
    let (h, w) = labels[0].shape();
    let mut data = Vec::with_capacity(labels.len() * h * w);
    for l in labels {
        l.ensure_shape((h, w))?;
        data.extend(l.data().iter().map(|c| *c as u8 as u32));
    }
    Ok(Tensor::from_vec(data, (labels.len(), h, w), &Device::Cpu)?)
}

/// `[b, h, w]` indices → `[b, classes, h, w]` one-hot of `dtype`.
pub fn one_hot(target: &Tensor, classes: usize, dtype: DType) -> Result<Tensor> {
    let (b, h, w) = target.dims3()?;
    let idx = target.to_dtype(DType::U32)?.flatten_all()?.to_vec1::<u32>()?;
    let plane = h * w;
    let mut data = vec![0f32; b * classes * plane];
    for (i, &c) in idx.iter().enumerate() {
        if c as usize >= classes {
            return Err(Error::InvalidClass(c));
        }
        let (n, p) = (i / plane, i % plane);
        data[(n * classes + c as usize) * plane + p] = 1.0;
    }
    Ok(Tensor::from_vec(data, (b, classes, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Cross-entropy (mean over pixels) plus `1 − mean soft Dice`, the Dice
/// score of each class pooled over the whole batch:
/// `dice_c = (2·Σ p·t + s) / (Σ p + Σ t + s)`.
pub fn seg_loss(logits: &Tensor, target: &Tensor, smooth: f64) -> Result<Tensor> {
    let (b, c, h, w) = logits.dims4()?;
    if c != NUM_CLASSES {
        return Err(Error::Config(format!("expected {NUM_CLASSES} logit channels, got {c}")));
    }
    if target.dims() != [b, h, w] {
        return Err(Error::DimensionMismatch {
            expected: (h, w),
            actual: (target.dims().get(1).copied().unwrap_or(0), target.dims().get(2).copied().unwrap_or(0)),
        });
    }
    let t = one_hot(target, c, logits.dtype())?;
    let m = logits.max_keepdim(1)?.detach();
    let z = logits.broadcast_sub(&m)?;
    let lse = z.exp()?.sum_keepdim(1)?.log()?;
    let logp = z.broadcast_sub(&lse)?;
    let ce = ((&t * &logp)?.sum_all()? / -((b * h * w) as f64))?;

    let p = logp.exp()?;
    let inter = (&p * &t)?.sum((0, 2, 3))?;
    let denom = ((p.sum((0, 2, 3))? + t.sum((0, 2, 3))?)? + smooth)?;
    let dice = ((inter * 2.0)? + smooth)?.div(&denom)?;
    let dice_loss = (dice.mean_all()?.neg()? + 1.0)?;
    Ok((ce + dice_loss)?)
}
