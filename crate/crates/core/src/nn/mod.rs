//! Minimal CPU neural-network toolkit on top of `candle-core` tensors and
//! autograd: convolutions, normalisation, parameter stores, optimisers and
//! safetensors archives.

mod fused;
mod layers;
pub mod ops;
mod optim;
mod params;
mod shifted;

pub use fused::{instance_norm, leaky_relu};
pub use layers::{Conv2d, ConvTranspose2d, InstanceNorm, Padding};
pub use optim::{poly_lr, Adam, Optimizer, Sgd};
pub use params::{load_tensors, save_tensors, Init, ParamStore, TensorArchive};

use candle_core::{DType, Device, Tensor};

use crate::error::Result;
use crate::raster::{Raster, Rgb};

/// Packs RGB rasters of one shape into a `[n, 3, h, w]` tensor scaled to
/// [−1, 1].
pub fn images_to_tensor(images: &[&Raster<Rgb>], dtype: DType) -> Result<Tensor> {
    let (h, w) = images[0].shape();
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        img.ensure_shape((h, w))?;
        for ch in 0..3 {
            data.extend(img.data().iter().map(|p| p[ch] as f32 / 127.5 - 1.0));
        }
    }
    Ok(Tensor::from_vec(data, (images.len(), 3, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Inverse of [`images_to_tensor`] for one sample of a batch.
pub fn tensor_to_image(t: &Tensor, index: usize) -> Result<Raster<Rgb>> {
    let (_, _, h, w) = t.dims4()?;
    let v = t.get(index)?.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    let q = |x: f32| ((x.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
    Raster::from_vec(
        h,
        w,
        (0..h * w).map(|i| [q(v[i]), q(v[h * w + i]), q(v[2 * h * w + i])]).collect(),
    )
}
