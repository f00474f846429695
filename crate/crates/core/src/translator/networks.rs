use candle_core::{DType, Tensor};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TransConfig;
use crate::corpus::padded_len;
use crate::error::Result;
use crate::nn::{self, ops, Conv2d, ConvTranspose2d, InstanceNorm, Padding, ParamStore};

/// Anything that maps `[b, 3, h, w]` images to images of the same shape.
pub trait Translator {
    fn translate(&self, x: &Tensor) -> Result<Tensor>;

    /// Element type expected on input.
    fn dtype(&self) -> DType {
        DType::F32
    }
}

/// The identity map, useful as a baseline and in tests.
pub struct Identity;

impl Translator for Identity {
    fn translate(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.clone())
    }
}

struct NormConv {
    conv: Conv2d,
    norm: InstanceNorm,
}

impl NormConv {
    #[allow(clippy::too_many_arguments)]
    fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, padding: Padding, slope: f64) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(ps, &format!("{name}.conv"), c_in, c_out, k, stride, padding, false, slope)?,
            norm: InstanceNorm::new(ps, &format!("{name}.norm"), c_out)?,
        })
    }

    fn forward(&self, x: &Tensor, slope: Option<f64>) -> Result<Tensor> {
        let y = self.norm.forward(&self.conv.forward(x)?)?;
        Ok(match slope {
            Some(s) => nn::leaky_relu(&y, s)?,
            None => y,
        })
    }
}

struct ResBlock {
    a: NormConv,
    b: NormConv,
}

/// Residual encoder-decoder: a 7×7 stem, two stride-2 downsamplings,
/// `blocks` residual blocks, two transposed-convolution upsamplings and a
/// 7×7 tanh head. Inputs of any size are mirror-padded to a multiple of 4
/// and the output is cropped back.
pub struct ResnetGenerator {
    params: ParamStore,
    stem: NormConv,
    down: Vec<NormConv>,
    blocks: Vec<ResBlock>,
    up: Vec<(ConvTranspose2d, InstanceNorm)>,
    head: Conv2d,
}

impl ResnetGenerator {
    pub fn new(channels: usize, blocks: usize, seed: u64, dtype: DType) -> Result<Self> {
        let mut ps = ParamStore::new(seed, dtype);
        let c = channels;
        let stem = NormConv::new(&mut ps, "stem", 3, c, 7, 1, Padding::Reflect(3), 0.0)?;
        let down = vec![
            NormConv::new(&mut ps, "down0", c, 2 * c, 3, 2, Padding::Zero(1), 0.0)?,
            NormConv::new(&mut ps, "down1", 2 * c, 4 * c, 3, 2, Padding::Zero(1), 0.0)?,
        ];
        let blocks = (0..blocks)
            .map(|i| {
                Ok(ResBlock {
                    a: NormConv::new(&mut ps, &format!("res{i}.a"), 4 * c, 4 * c, 3, 1, Padding::Reflect(1), 0.0)?,
                    b: NormConv::new(&mut ps, &format!("res{i}.b"), 4 * c, 4 * c, 3, 1, Padding::Reflect(1), 1.0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut up = Vec::new();
        for (i, (ci, co)) in [(4 * c, 2 * c), (2 * c, c)].into_iter().enumerate() {
            up.push((
                ConvTranspose2d::new(&mut ps, &format!("up{i}.conv"), ci, co, 3, 2, 1, 1, false)?,
                InstanceNorm::new(&mut ps, &format!("up{i}.norm"), co)?,
            ));
        }
        let head = Conv2d::new(&mut ps, "head", c, 3, 7, 1, Padding::Reflect(3), true, 1.0)?;
        Ok(Self {
            params: ps,
            stem,
            down,
            blocks,
            up,
            head,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        let mut y = ops::reflect_pad2(x, 0, padded_len(h, 4) - h, 0, padded_len(w, 4) - w)?;
        y = self.stem.forward(&y, Some(0.0))?;
        for d in &self.down {
            y = d.forward(&y, Some(0.0))?;
        }
        for r in &self.blocks {
            let t = r.b.forward(&r.a.forward(&y, Some(0.0))?, None)?;
            y = (y + t)?;
        }
        for (conv, norm) in &self.up {
            y = nn::leaky_relu(&norm.forward(&conv.forward(&y)?)?, 0.0)?;
        }
        let y = self.head.forward(&y)?.tanh()?;
        Ok(y.narrow(2, 0, h)?.narrow(3, 0, w)?)
    }
}

impl Translator for ResnetGenerator {
    fn translate(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }

    fn dtype(&self) -> DType {
        self.params.dtype()
    }
}

/// Patch classifier: 4×4 convolutions, stride 2 for all but the last two,
/// leaky ReLU 0.2, instance norm after the first. Three hidden layers give
/// each score a 70×70 receptive field.
pub struct PatchDiscriminator {
    params: ParamStore,
    first: Conv2d,
    hidden: Vec<NormConv>,
    last: Conv2d,
}

const DISC_SLOPE: f64 = 0.2;

impl PatchDiscriminator {
    pub fn new(channels: usize, layers: usize, seed: u64, dtype: DType) -> Result<Self> {
        let mut ps = ParamStore::new(seed, dtype);
        let first = Conv2d::new(&mut ps, "first", 3, channels, 4, 2, Padding::Zero(1), true, DISC_SLOPE)?;
        let mut hidden = Vec::new();
        let mut c = channels;
        for n in 1..=layers {
            let co = channels * (1 << n).min(8);
            let stride = if n < layers { 2 } else { 1 };
            hidden.push(NormConv::new(&mut ps, &format!("hidden{n}"), c, co, 4, stride, Padding::Zero(1), DISC_SLOPE)?);
            c = co;
        }
        let last = Conv2d::new(&mut ps, "last", c, 1, 4, 1, Padding::Zero(1), true, 1.0)?;
        Ok(Self {
            params: ps,
            first,
            hidden,
            last,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// `[b, 3, h, w]` → `[b, 1, h', w']` realness scores.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = nn::leaky_relu(&self.first.forward(x)?, DISC_SLOPE)?;
        for l in &self.hidden {
            y = l.forward(&y, Some(DISC_SLOPE))?;
        }
        self.last.forward(&y)
    }
}

/// Both generators and both discriminators. `gen_xy` maps historical (X)
/// to modern (Y); `disc_x` scores historical-looking images.
pub struct TranslationModelPair {
    pub config: TransConfig,
    pub seed: u64,
    pub gen_xy: ResnetGenerator,
    pub gen_yx: ResnetGenerator,
    pub disc_x: PatchDiscriminator,
    pub disc_y: PatchDiscriminator,
}

impl TranslationModelPair {
    pub fn new(cfg: &TransConfig, seed: u64, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || rng.next_u64();
        let (s1, s2, s3, s4) = (next(), next(), next(), next());
        Ok(Self {
            config: cfg.clone(),
            seed,
            gen_xy: ResnetGenerator::new(cfg.gen_channels, cfg.gen_blocks, s1, dtype)?,
            gen_yx: ResnetGenerator::new(cfg.gen_channels, cfg.gen_blocks, s2, dtype)?,
            disc_x: PatchDiscriminator::new(cfg.disc_channels, cfg.disc_layers, s3, dtype)?,
            disc_y: PatchDiscriminator::new(cfg.disc_channels, cfg.disc_layers, s4, dtype)?,
        })
    }

    pub fn dtype(&self) -> DType {
        self.gen_xy.params().dtype()
    }

    /// Parameter stores in archive order, with their name prefixes.
    pub fn stores(&self) -> [(&'static str, &ParamStore); 4] {
        [
            ("gen_xy.", self.gen_xy.params()),
            ("gen_yx.", self.gen_yx.params()),
            ("disc_x.", self.disc_x.params()),
            ("disc_y.", self.disc_y.params()),
        ]
    }

    pub fn flat_values(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for (_, s) in self.stores() {
            out.extend(s.flat_values()?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use candle_core::Device;

    use super::*;

    fn input(h: usize, w: usize) -> Tensor {
        Tensor::rand(-1f32, 1f32, (1, 3, h, w), &Device::Cpu).unwrap()
    }

    #[test]
    fn generator_preserves_shape_for_ragged_sizes() {
        let g = ResnetGenerator::new(2, 1, 0, DType::F32).unwrap();
        for (h, w) in [(8, 8), (9, 13), (16, 5)] {
            let y = g.forward(&input(h, w)).unwrap();
            assert_eq!(y.dims(), &[1, 3, h, w]);
            let m = y.abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar::<f32>().unwrap();
            assert!(m <= 1.0);
        }
    }

    #[test]
    fn discriminator_emits_a_score_grid() {
        let d = PatchDiscriminator::new(4, 3, 0, DType::F32).unwrap();
        assert_eq!(d.forward(&input(64, 64)).unwrap().dims(), &[1, 1, 6, 6]);
        assert_eq!(d.forward(&input(80, 80)).unwrap().dims(), &[1, 1, 8, 8]);
    }

    #[test]
    fn pair_initialisation_is_seeded() {
        let cfg = TransConfig {
            gen_channels: 2,
            gen_blocks: 1,
            disc_channels: 2,
            ..TransConfig::toy()
        };
        let a = TranslationModelPair::new(&cfg, 3, DType::F32).unwrap();
        let b = TranslationModelPair::new(&cfg, 3, DType::F32).unwrap();
        let c = TranslationModelPair::new(&cfg, 4, DType::F32).unwrap();
        assert_eq!(a.flat_values().unwrap(), b.flat_values().unwrap());
        assert_ne!(a.flat_values().unwrap(), c.flat_values().unwrap());
        // the two generators start from different weights
        assert_ne!(a.gen_xy.params().flat_values().unwrap(), a.gen_yx.params().flat_values().unwrap());
    }
}
