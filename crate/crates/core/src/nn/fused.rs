//! Single-pass instance norm and leaky ReLU with analytic gradients.

use candle_core::{CpuStorage, CustomOp1, CustomOp2, CustomOp3, Layout, Shape, Tensor};

trait Float: Copy + Default + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Float for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Float for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

fn slice<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((a, b)) => Ok(&data[a..b]),
        None => candle_core::bail!("fused op expects contiguous operands"),
    }
}

/// (mean, 1/σ) of one plane.
fn moments<T: Float>(plane: &[T], eps: f64) -> (f64, f64) {
    let n = plane.len() as f64;
    let mean = plane.iter().map(|v| v.to_f64()).sum::<f64>() / n;
    let var = plane.iter().map(|v| (v.to_f64() - mean).powi(2)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

#[derive(Clone, Copy)]
struct Norm {
    channels: usize,
    plane: usize,
    eps: f64,
}

fn norm_fwd<T: Float>(x: &[T], g: &[T], b: &[T], p: &Norm) -> Vec<T> {
    let mut y = Vec::with_capacity(x.len());
    for (i, plane) in x.chunks_exact(p.plane).enumerate() {
        let c = i % p.channels;
        let (mean, inv) = moments(plane, p.eps);
        let (gc, bc) = (g[c].to_f64(), b[c].to_f64());
        y.extend(plane.iter().map(|v| T::from_f64((v.to_f64() - mean) * inv * gc + bc)));
    }
    y
}

/// Packs `[dx.., dgamma.., dbeta..]` into one buffer.
fn norm_bwd<T: Float>(x: &[T], g: &[T], dy: &[T], p: &Norm) -> Vec<T> {
    let mut out = vec![T::default(); x.len() + 2 * p.channels];
    let mut dg = vec![0.0; p.channels];
    let mut db = vec![0.0; p.channels];
    let n = p.plane as f64;
    for (i, (plane, dplane)) in x.chunks_exact(p.plane).zip(dy.chunks_exact(p.plane)).enumerate() {
        let c = i % p.channels;
        let (mean, inv) = moments(plane, p.eps);
        let gc = g[c].to_f64();
        let (mut sum_d, mut sum_dx) = (0.0, 0.0);
        for (v, d) in plane.iter().zip(dplane) {
            let (xh, d) = ((v.to_f64() - mean) * inv, d.to_f64());
            sum_d += d;
            sum_dx += d * xh;
        }
        dg[c] += sum_dx;
        db[c] += sum_d;
        let (m1, m2) = (gc * sum_d / n, gc * sum_dx / n);
        let dst = &mut out[i * p.plane..(i + 1) * p.plane];
        for ((o, v), d) in dst.iter_mut().zip(plane).zip(dplane) {
            let xh = (v.to_f64() - mean) * inv;
            *o = T::from_f64(inv * (gc * d.to_f64() - m1 - xh * m2));
        }
    }
    let tail = &mut out[x.len()..];
    for c in 0..p.channels {
        tail[c] = T::from_f64(dg[c]);
        tail[p.channels + c] = T::from_f64(db[c]);
    }
    out
}

struct NormOp(Norm);
struct NormBwd(Norm);

impl CustomOp3 for NormOp {
    fn name(&self) -> &'static str {
        "instance-norm"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
        s3: &CpuStorage,
        l3: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let out = match (s1, s2, s3) {
            (CpuStorage::F32(x), CpuStorage::F32(g), CpuStorage::F32(b)) => {
                CpuStorage::F32(norm_fwd(slice(x, l1)?, slice(g, l2)?, slice(b, l3)?, &self.0))
            }
            (CpuStorage::F64(x), CpuStorage::F64(g), CpuStorage::F64(b)) => {
                CpuStorage::F64(norm_fwd(slice(x, l1)?, slice(g, l2)?, slice(b, l3)?, &self.0))
            }
            _ => candle_core::bail!("instance norm supports matching f32/f64 operands only"),
        };
        Ok((out, l1.shape().clone()))
    }

    fn bwd(
        &self,
        x: &Tensor,
        gamma: &Tensor,
        _beta: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
        let packed = x.apply_op3_no_bwd(gamma, &grad.contiguous()?, &NormBwd(self.0))?;
        let (n, c) = (x.elem_count(), self.0.channels);
        let dx = packed.narrow(0, 0, n)?.reshape(x.shape())?;
        let dg = packed.narrow(0, n, c)?;
        let db = packed.narrow(0, n + c, c)?;
        Ok((Some(dx), Some(dg), Some(db)))
    }
}

impl CustomOp3 for NormBwd {
    fn name(&self) -> &'static str {
        "instance-norm-bwd"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
        s3: &CpuStorage,
        l3: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let n = l1.shape().elem_count() + 2 * self.0.channels;
        let out = match (s1, s2, s3) {
            (CpuStorage::F32(x), CpuStorage::F32(g), CpuStorage::F32(d)) => {
                CpuStorage::F32(norm_bwd(slice(x, l1)?, slice(g, l2)?, slice(d, l3)?, &self.0))
            }
            (CpuStorage::F64(x), CpuStorage::F64(g), CpuStorage::F64(d)) => {
                CpuStorage::F64(norm_bwd(slice(x, l1)?, slice(g, l2)?, slice(d, l3)?, &self.0))
            }
            _ => candle_core::bail!("instance norm supports matching f32/f64 operands only"),
        };
        Ok((out, Shape::from(n)))
    }
}

/// Per-sample, per-channel normalisation of `(b, c, h, w)` with a learned
/// affine transform.
pub fn instance_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> candle_core::Result<Tensor> {
    let (_, c, h, w) = x.dims4()?;
    if gamma.dims() != [c] || beta.dims() != [c] {
        candle_core::bail!("instance norm over {c} channels got affine shapes {:?}/{:?}", gamma.dims(), beta.dims());
    }
    let op = NormOp(Norm {
        channels: c,
        plane: h * w,
        eps,
    });
    x.contiguous()?.apply_op3(&gamma.contiguous()?, &beta.contiguous()?, op)
}

struct Leaky(f64);
struct LeakyBwd(f64);

impl CustomOp1 for Leaky {
    fn name(&self) -> &'static str {
        "leaky-relu"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let a = self.0;
        let out = match s {
            CpuStorage::F32(x) => {
                let a = a as f32;
                CpuStorage::F32(slice(x, l)?.iter().map(|&v| if v > 0.0 { v } else { a * v }).collect())
            }
            CpuStorage::F64(x) => CpuStorage::F64(slice(x, l)?.iter().map(|&v| if v > 0.0 { v } else { a * v }).collect()),
            _ => candle_core::bail!("leaky relu supports f32/f64 only"),
        };
        Ok((out, l.shape().clone()))
    }

    fn bwd(&self, x: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(x.apply_op2_no_bwd(&grad.contiguous()?, &LeakyBwd(self.0))?))
    }
}

impl CustomOp2 for LeakyBwd {
    fn name(&self) -> &'static str {
        "leaky-relu-bwd"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let a = self.0;
        let out = match (s1, s2) {
            (CpuStorage::F32(x), CpuStorage::F32(d)) => {
                let a = a as f32;
                let it = slice(x, l1)?.iter().zip(slice(d, l2)?);
                CpuStorage::F32(it.map(|(&v, &g)| if v > 0.0 { g } else { a * g }).collect())
            }
            (CpuStorage::F64(x), CpuStorage::F64(d)) => {
                let it = slice(x, l1)?.iter().zip(slice(d, l2)?);
                CpuStorage::F64(it.map(|(&v, &g)| if v > 0.0 { g } else { a * g }).collect())
            }
            _ => candle_core::bail!("leaky relu supports matching f32/f64 operands only"),
        };
        Ok((out, l1.shape().clone()))
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op1(Leaky(slope))
}

#[cfg(test)]
mod tests {
    use candle_core::{Device, Var};

    use super::*;
    use crate::nn::ops;

    fn rand(shape: &[usize], seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
        (a - b).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn instance_norm_matches_composed_ops() {
        let x = Var::from_tensor(&rand(&[2, 3, 4, 5], 1)).unwrap();
        let g = Var::from_tensor(&rand(&[3], 2)).unwrap();
        let b = Var::from_tensor(&rand(&[3], 3)).unwrap();
        let probe = rand(&[2, 3, 4, 5], 4);
        let ours = instance_norm(&x, &g, &b, 1e-5).unwrap();
        let theirs = ops::instance_norm(&x, &g, &b, 1e-5).unwrap();
        assert!(max_diff(&ours, &theirs) < 1e-12);
        let g1 = ours.mul(&probe).unwrap().sum_all().unwrap().backward().unwrap();
        let g2 = theirs.mul(&probe).unwrap().sum_all().unwrap().backward().unwrap();
        for v in [&x, &g, &b] {
            assert!(max_diff(g1.get(v).unwrap(), g2.get(v).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn leaky_relu_matches_composed_ops() {
        let x = Var::from_tensor(&rand(&[2, 3, 4, 5], 5)).unwrap();
        let probe = rand(&[2, 3, 4, 5], 6);
        let ours = leaky_relu(&x, 0.2).unwrap();
        let theirs = ops::leaky_relu(&x, 0.2).unwrap();
        assert!(max_diff(&ours, &theirs) < 1e-15);
        let g1 = ours.mul(&probe).unwrap().sum_all().unwrap().backward().unwrap();
        let g2 = theirs.mul(&probe).unwrap().sum_all().unwrap().backward().unwrap();
        assert!(max_diff(g1.get(&x).unwrap(), g2.get(&x).unwrap()) < 1e-15);
    }
}
