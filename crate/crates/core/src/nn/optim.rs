use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::Result;

pub trait Optimizer {
    fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()>;
}

/// SGD with optional Nesterov momentum; L2 weight decay is added to the
/// gradient.
pub struct Sgd {
    vars: Vec<Var>,
    velocity: Vec<Option<Tensor>>,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn new(vars: Vec<Var>, momentum: f64, nesterov: bool, weight_decay: f64) -> Self {
        let velocity = vec![None; vars.len()];
        Self {
            vars,
            velocity,
            momentum,
            nesterov,
            weight_decay,
        }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        for (var, vel) in self.vars.iter().zip(self.velocity.iter_mut()) {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = if self.weight_decay > 0.0 {
                (g + var.as_tensor().affine(self.weight_decay, 0.0)?)?
            } else {
                g.clone()
            };
            let v = match vel.take() {
                Some(v) => ((v * self.momentum)? + &g)?,
                None => g.clone(),
            };
            let update = if self.nesterov {
                (&g + (&v * self.momentum)?)?
            } else {
                v.clone()
            };
            *vel = Some(v);
            if lr != 0.0 {
                var.set(&(var.as_tensor() - (update * lr)?)?)?;
            }
        }
        Ok(())
    }
}

pub struct Adam {
    vars: Vec<Var>,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(vars: Vec<Var>, beta1: f64, beta2: f64) -> Self {
        let n = vars.len();
        Self {
            vars,
            m: vec![None; n],
            v: vec![None; n],
            t: 0,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((var, m), v) in self.vars.iter().zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let m_new = match m.take() {
                Some(m) => ((m * self.beta1)? + (g * (1.0 - self.beta1))?)?,
                None => (g * (1.0 - self.beta1))?,
            };
            let v_new = match v.take() {
                Some(v) => ((v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?,
                None => (g.sqr()? * (1.0 - self.beta2))?,
            };
            if lr != 0.0 {
                let denom = ((&v_new / c2)?.sqrt()? + self.eps)?;
                let step = ((&m_new / c1)? / denom)?;
                var.set(&(var.as_tensor() - (step * lr)?)?)?;
            }
            *m = Some(m_new);
            *v = Some(v_new);
        }
        Ok(())
    }
}

/// `base · (1 − progress)^power`, progress in [0, 1].
pub fn poly_lr(base: f64, progress: f64, power: f64) -> f64 {
    base * (1.0 - progress.clamp(0.0, 1.0)).powf(power)
}
