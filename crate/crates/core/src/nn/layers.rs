use candle_core::Tensor;

use super::ops;
use super::shifted::{conv2d_s1, PadMode};
use super::params::{Init, ParamStore};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Zero(usize),
    Reflect(usize),
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv2d {
    /// `slope` is the negative slope of the activation that follows, used
    /// only to scale the initialisation.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        bias: bool,
        slope: f64,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel;
        let weight = ps.var(format!("{name}.weight"), &[c_out, c_in, kernel, kernel], Init::Kaiming { fan_in, slope })?;
        let bias = if bias {
            Some(ps.var(format!("{name}.bias"), &[c_out], Init::Zeros)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if self.stride == 1 {
            let (p, mode) = match self.padding {
                Padding::Zero(p) => (p, PadMode::Zero),
                Padding::Reflect(p) => (p, PadMode::Reflect),
            };
            let y = conv2d_s1(x, &self.weight, p, mode)?;
            return Ok(match &self.bias {
                Some(b) => y.broadcast_add(&b.reshape((1, (), 1, 1))?)?,
                None => y,
            });
        }
        let y = match self.padding {
            Padding::Zero(p) => ops::conv2d(x, &self.weight, self.bias.as_ref(), self.stride, p)?,
            Padding::Reflect(p) => {
                let x = ops::reflect_pad(x, p)?;
                ops::conv2d(&x, &self.weight, self.bias.as_ref(), self.stride, 0)?
            }
        };
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
        bias: bool,
    ) -> Result<Self> {
        // each output pixel sees about c_in·k²/stride² inputs
        let fan_in = (c_in * kernel * kernel / (stride * stride)).max(1);
        let weight = ps.var(format!("{name}.weight"), &[c_in, c_out, kernel, kernel], Init::Kaiming { fan_in, slope: 1.0 })?;
        let bias = if bias {
            Some(ps.var(format!("{name}.bias"), &[c_out], Init::Zeros)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            pad,
            out_pad,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(ops::conv_transpose2d(
            x,
            &self.weight,
            self.bias.as_ref(),
            self.stride,
            self.pad,
            self.out_pad,
        )?)
    }
}

#[derive(Clone, Debug)]
pub struct InstanceNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl InstanceNorm {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.var(format!("{name}.gamma"), &[channels], Init::Ones)?,
            beta: ps.var(format!("{name}.beta"), &[channels], Init::Zeros)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(super::fused::instance_norm(x, &self.gamma, &self.beta, self.eps)?)
    }
}
