use candle_core::{DType, Tensor};

use super::SegConfig;
use crate::corpus::{padded_len, patch_offsets, ClassId, LabelRaster, LabelSource, Tile};
use crate::error::Result;
use crate::nn::{self, ops, Conv2d, ConvTranspose2d, InstanceNorm, Padding, ParamStore};
use crate::raster::{Raster, Rgb};

const SLOPE: f64 = 0.01;

struct ConvBlock {
    conv: Conv2d,
    norm: InstanceNorm,
}

impl ConvBlock {
    fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(ps, &format!("{name}.conv"), c_in, c_out, 3, stride, Padding::Reflect(1), false, SLOPE)?,
            norm: InstanceNorm::new(ps, &format!("{name}.norm"), c_out)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.norm.forward(&self.conv.forward(x)?)?;
        Ok(nn::leaky_relu(&y, SLOPE)?)
    }
}

fn run(blocks: &[ConvBlock], x: &Tensor) -> Result<Tensor> {
    let mut x = x.clone();
    for b in blocks {
        x = b.forward(&x)?;
    }
    Ok(x)
}

/// U-Net with mirror-padded 3×3 convolutions. Stage 0 keeps full
/// resolution, every later stage opens with a stride-2 convolution; the
/// decoder upsamples with 2×2 transposed convolutions and concatenates the
/// matching encoder output.
pub struct SegModel {
    pub config: SegConfig,
    pub seed: u64,
    params: ParamStore,
    encoder: Vec<Vec<ConvBlock>>,
    up: Vec<ConvTranspose2d>,
    decoder: Vec<Vec<ConvBlock>>,
    head: Conv2d,
}

/// Builds a freshly initialised model; the same seed gives the same
/// parameters.
pub fn build_model(cfg: &SegConfig, seed: u64) -> Result<SegModel> {
    SegModel::new(cfg, seed, DType::F32)
}

impl SegModel {
    pub fn new(cfg: &SegConfig, seed: u64, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new(seed, dtype);
        let ch = cfg.channels();
        let mut encoder = Vec::new();
        for s in 0..cfg.stages {
            let c_in = if s == 0 { 3 } else { ch[s - 1] };
            let mut blocks = Vec::new();
            for i in 0..cfg.convs_per_stage {
                let (ci, stride) = if i == 0 { (c_in, if s == 0 { 1 } else { 2 }) } else { (ch[s], 1) };
                blocks.push(ConvBlock::new(&mut ps, &format!("enc{s}.{i}"), ci, ch[s], stride)?);
            }
            encoder.push(blocks);
        }
        let mut up = Vec::new();
        let mut decoder = Vec::new();
        for s in 0..cfg.stages - 1 {
            up.push(ConvTranspose2d::new(&mut ps, &format!("up{s}"), ch[s + 1], ch[s], 2, 2, 0, 0, false)?);
            let mut blocks = Vec::new();
            for i in 0..cfg.convs_per_stage {
                let ci = if i == 0 { 2 * ch[s] } else { ch[s] };
                blocks.push(ConvBlock::new(&mut ps, &format!("dec{s}.{i}"), ci, ch[s], 1)?);
            }
            decoder.push(blocks);
        }
        let head = Conv2d::new(&mut ps, "head", ch[0], cfg.num_classes, 1, 1, Padding::Zero(0), true, 1.0)?;
        Ok(Self {
            config: cfg.clone(),
            seed,
            params: ps,
            encoder,
            up,
            decoder,
            head,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    /// `[b, 3, h, w]` images in [−1, 1] → `[b, classes, h, w]` logits for
    /// any `h, w ≥ 1`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        let f = self.config.downsampling_factor();
        let x = ops::reflect_pad2(x, 0, padded_len(h, f) - h, 0, padded_len(w, f) - w)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut y = x;
        for stage in &self.encoder {
            y = run(stage, &y)?;
            skips.push(y.clone());
        }
        for s in (0..self.decoder.len()).rev() {
            let up = self.up[s].forward(&y)?;
            y = run(&self.decoder[s], &Tensor::cat(&[&up, &skips[s]], 1)?)?;
        }
        let logits = self.head.forward(&y)?;
        Ok(logits.narrow(2, 0, h)?.narrow(3, 0, w)?)
    }

    /// Argmax labels for a batch of equally sized images.
    pub fn predict_batch(&self, images: &[&Raster<Rgb>]) -> Result<Vec<Raster<ClassId>>> {
        let x = nn::images_to_tensor(images, self.dtype())?;
        let logits = self.forward(&x)?;
        let (b, _, h, w) = logits.dims4()?;
        let idx = logits.argmax(1)?.to_dtype(DType::U32)?.flatten_all()?.to_vec1::<u32>()?;
        (0..b)
            .map(|i| {
                let cls = idx[i * h * w..(i + 1) * h * w]
                    .iter()
                    .map(|&c| ClassId::from_u8(c as u8))
                    .collect::<Result<Vec<_>>>()?;
                Raster::from_vec(h, w, cls)
            })
            .collect()
    }

    /// Non-overlapping patch inference: mirror-pad to a multiple of
    /// `patch_px`, label each window, stitch and crop.
    pub fn predict_image(&self, image: &Raster<Rgb>, patch_px: usize) -> Result<Raster<ClassId>> {
        let (h, w) = image.shape();
        let patch_px = patch_px.max(1);
        let padded = image.pad_reflect(padded_len(h, patch_px), padded_len(w, patch_px));
        let offsets = patch_offsets(h, w, patch_px);
        let mut out = Raster::filled(h, w, ClassId::Background);
        for chunk in offsets.chunks(self.config.batch_size.max(1)) {
            let crops: Vec<Raster<Rgb>> = chunk
                .iter()
                .map(|&(r, c)| padded.crop(r, c, patch_px, patch_px))
                .collect();
            let refs: Vec<&Raster<Rgb>> = crops.iter().collect();
            for (labels, &(r, c)) in self.predict_batch(&refs)?.into_iter().zip(chunk) {
                out.paste(&labels, r, c);
            }
        }
        Ok(out)
    }
}

/// Labels a whole tile with patches of `patch_px`.
pub fn predict_tile(model: &SegModel, tile: &Tile, patch_px: usize) -> Result<LabelRaster> {
    Ok(LabelRaster::new(
        tile.tile_id.clone(),
        LabelSource::HistoricalManual,
        model.predict_image(&tile.image, patch_px)?,
    ))
}
