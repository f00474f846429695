//! Convolution primitives built on an im2col/col2im pair of custom ops so
//! that both passes run through a single GEMM. Col2im is the adjoint of
//! im2col, which makes each the other's backward pass.

use candle_core::{CpuStorage, CustomOp1, DType, Layout, Shape, Tensor, D};

use crate::raster::reflect_index;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(
        (batch, channels, height, width): (usize, usize, usize, usize),
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> candle_core::Result<Self> {
        if height + 2 * pad < kernel || width + 2 * pad < kernel {
            candle_core::bail!(
                "conv input {height}x{width} (pad {pad}) smaller than kernel {kernel}"
            );
        }
        Ok(Self {
            batch,
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: (height + 2 * pad - kernel) / stride + 1,
            out_w: (width + 2 * pad - kernel) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    /// Visits every (column-matrix index, image index) pair that lands inside
    /// the unpadded image.
    #[inline]
    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        let g = *self;
        let ncols = g.col_cols();
        for c in 0..g.channels {
            for ky in 0..g.kernel {
                for kx in 0..g.kernel {
                    let row = (c * g.kernel + ky) * g.kernel + kx;
                    for b in 0..g.batch {
                        let img_base = (b * g.channels + c) * g.height * g.width;
                        for oy in 0..g.out_h {
                            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                            if iy < 0 || iy >= g.height as isize {
                                continue;
                            }
                            let col_base = row * ncols + (b * g.out_h + oy) * g.out_w;
                            let img_row = img_base + iy as usize * g.width;
                            for ox in 0..g.out_w {
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if ix < 0 || ix >= g.width as isize {
                                    continue;
                                }
                                f(col_base + ox, img_row + ix as usize);
                            }
                        }
                    }
                }
            }
        }
    }
}

struct Im2Col(Geometry);
struct Col2Im(Geometry);

fn contiguous_slice<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("im2col/col2im expect contiguous input"),
    }
}

fn im2col<T: Copy + Default>(src: &[T], g: &Geometry) -> Vec<T> {
    let mut dst = vec![T::default(); g.col_rows() * g.col_cols()];
    g.for_each(|ci, ii| dst[ci] = src[ii]);
    dst
}

fn col2im<T: Copy + Default + std::ops::AddAssign>(src: &[T], g: &Geometry) -> Vec<T> {
    let mut dst = vec![T::default(); g.batch * g.channels * g.height * g.width];
    g.for_each(|ci, ii| dst[ii] += src[ci]);
    dst
}

impl CustomOp1 for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let shape = Shape::from((g.col_rows(), g.col_cols()));
        let out = match s {
            CpuStorage::F32(v) => CpuStorage::F32(im2col(contiguous_slice(v, l)?, g)),
            CpuStorage::F64(v) => CpuStorage::F64(im2col(contiguous_slice(v, l)?, g)),
            _ => candle_core::bail!("im2col supports f32 and f64 only"),
        };
        Ok((out, shape))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Col2Im(self.0))?))
    }
}

impl CustomOp1 for Col2Im {
    fn name(&self) -> &'static str {
        "col2im"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let shape = Shape::from((g.batch, g.channels, g.height, g.width));
        let out = match s {
            CpuStorage::F32(v) => CpuStorage::F32(col2im(contiguous_slice(v, l)?, g)),
            CpuStorage::F64(v) => CpuStorage::F64(col2im(contiguous_slice(v, l)?, g)),
            _ => candle_core::bail!("col2im supports f32 and f64 only"),
        };
        Ok((out, shape))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Im2Col(self.0))?))
    }
}

/// 2-D convolution, `weight: [c_out, c_in, k, k]`, zero padding `pad`.
pub fn conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> candle_core::Result<Tensor> {
    let (c_out, c_in, k, k2) = weight.dims4()?;
    debug_assert_eq!(k, k2);
    let (b, c, h, w) = x.dims4()?;
    if c != c_in {
        candle_core::bail!("conv2d: input has {c} channels, kernel expects {c_in}");
    }
    let g = Geometry::new((b, c, h, w), k, stride, pad)?;
    let cols = x.contiguous()?.apply_op1(Im2Col(g))?;
    let out = weight.reshape((c_out, c_in * k * k))?.matmul(&cols)?;
    let out = out
        .reshape((c_out, b, g.out_h, g.out_w))?
        .transpose(0, 1)?
        .contiguous()?;
    match bias {
        Some(bias) => out.broadcast_add(&bias.reshape((1, c_out, 1, 1))?),
        None => Ok(out),
    }
}

/// Transposed convolution, `weight: [c_in, c_out, k, k]`; the exact adjoint
/// of [`conv2d`] with the same stride and padding, grown by `out_pad`.
pub fn conv_transpose2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> candle_core::Result<Tensor> {
    let (c_in, c_out, k, _) = weight.dims4()?;
    let (b, c, h_in, w_in) = x.dims4()?;
    if c != c_in {
        candle_core::bail!("conv_transpose2d: input has {c} channels, kernel expects {c_in}");
    }
    let h = (h_in - 1) * stride + k + out_pad - 2 * pad;
    let w = (w_in - 1) * stride + k + out_pad - 2 * pad;
    let g = Geometry::new((b, c_out, h, w), k, stride, pad)?;
    debug_assert_eq!((g.out_h, g.out_w), (h_in, w_in));
    let xf = x.transpose(0, 1)?.contiguous()?.reshape((c_in, b * h_in * w_in))?;
    let cols = weight.reshape((c_in, c_out * k * k))?.t()?.matmul(&xf)?;
    let out = cols.contiguous()?.apply_op1(Col2Im(g))?;
    match bias {
        Some(bias) => out.broadcast_add(&bias.reshape((1, c_out, 1, 1))?),
        None => Ok(out),
    }
}

fn reflect_indices(len: usize, before: usize, after: usize, device: &candle_core::Device) -> candle_core::Result<Tensor> {
    let idx: Vec<u32> = (0..len + before + after)
        .map(|i| {
            // position relative to the original axis, mirrored on both sides
            let rel = i as isize - before as isize;
            let m = if rel < 0 { (-rel) as usize } else { rel as usize };
            reflect_index(m, len) as u32
        })
        .collect();
    Tensor::from_vec(idx, len + before + after, device)
}

/// Mirror padding (edge not repeated) on the two spatial axes.
pub fn reflect_pad(x: &Tensor, pad: usize) -> candle_core::Result<Tensor> {
    reflect_pad2(x, pad, pad, pad, pad)
}

/// Asymmetric mirror padding `(top, bottom, left, right)`.
pub fn reflect_pad2(
    x: &Tensor,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> candle_core::Result<Tensor> {
    if top + bottom + left + right == 0 {
        return Ok(x.clone());
    }
    let (_, _, h, w) = x.dims4()?;
    let rows = reflect_indices(h, top, bottom, x.device())?;
    let cols = reflect_indices(w, left, right, x.device())?;
    x.index_select(&rows, 2)?.index_select(&cols, 3)
}

/// Per-sample, per-channel normalisation over the spatial axes.
pub fn instance_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> candle_core::Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let flat = x.reshape((b, c, h * w))?;
    let mean = flat.mean_keepdim(D::Minus1)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + eps)?.sqrt()?)?;
    normed
        .reshape((b, c, h, w))?
        .broadcast_mul(&gamma.reshape((1, c, 1, 1))?)?
        .broadcast_add(&beta.reshape((1, c, 1, 1))?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> candle_core::Result<Tensor> {
    x.maximum(&x.affine(slope, 0.0)?)
}

/// Casts `x` to the dtype used by `like` if they differ.
pub fn match_dtype(x: &Tensor, dtype: DType) -> candle_core::Result<Tensor> {
    if x.dtype() == dtype {
        Ok(x.clone())
    } else {
        x.to_dtype(dtype)
    }
}

#[cfg(test)]
mod tests {
    use candle_core::{Device, Var};

    use super::*;

    fn rand(shape: &[usize], seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    fn close(a: &Tensor, b: &Tensor, tol: f64) {
        assert_eq!(a.dims(), b.dims());
        let a = a.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let b = b.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn conv_matches_candle_reference() {
        for (stride, pad, k, h) in [(1, 0, 3, 7), (2, 1, 3, 8), (2, 1, 4, 9), (1, 3, 7, 6), (2, 0, 2, 6)] {
            let x = rand(&[2, 3, h, h + 1], 1);
            let w = rand(&[4, 3, k, k], 2);
            let ours = conv2d(&x, &w, None, stride, pad).unwrap();
            let theirs = x.conv2d(&w, pad, stride, 1, 1).unwrap();
            close(&ours, &theirs, 1e-12);
        }
    }

    #[test]
    fn transposed_conv_matches_candle_reference() {
        for (stride, pad, out_pad, k) in [(2, 0, 0, 2), (2, 1, 1, 3), (1, 1, 0, 3)] {
            let x = rand(&[2, 3, 5, 4], 3);
            let w = rand(&[3, 2, k, k], 4);
            let ours = conv_transpose2d(&x, &w, None, stride, pad, out_pad).unwrap();
            let theirs = x.conv_transpose2d(&w, pad, out_pad, stride, 1).unwrap();
            close(&ours, &theirs, 1e-12);
        }
    }

    #[test]
    fn conv_gradients_match_candle_reference() {
        let x = Var::from_tensor(&rand(&[2, 3, 6, 6], 5)).unwrap();
        let w = Var::from_tensor(&rand(&[4, 3, 3, 3], 6)).unwrap();
        let probe = rand(&[2, 4, 3, 3], 7);
        let ours = conv2d(&x, &w, None, 2, 1).unwrap().mul(&probe).unwrap().sum_all().unwrap();
        let theirs = x.conv2d(&w, 1, 2, 1, 1).unwrap().mul(&probe).unwrap().sum_all().unwrap();
        let (g1, g2) = (ours.backward().unwrap(), theirs.backward().unwrap());
        close(g1.get(&x).unwrap(), g2.get(&x).unwrap(), 1e-12);
        close(g1.get(&w).unwrap(), g2.get(&w).unwrap(), 1e-12);
    }

    #[test]
    fn reflect_pad_mirrors_without_edge_repeat() {
        let x = Tensor::arange(0f64, 4.0, &Device::Cpu).unwrap().reshape((1, 1, 1, 4)).unwrap();
        let p = reflect_pad2(&x, 0, 0, 2, 3).unwrap();
        assert_eq!(p.flatten_all().unwrap().to_vec1::<f64>().unwrap(), vec![2., 1., 0., 1., 2., 3., 2., 1., 0.]);
    }

    #[test]
    fn instance_norm_zero_mean_unit_variance() {
        let x = rand(&[2, 3, 5, 5], 9);
        let ones = Tensor::ones(3, DType::F64, &Device::Cpu).unwrap();
        let zeros = Tensor::zeros(3, DType::F64, &Device::Cpu).unwrap();
        let y = instance_norm(&x, &ones, &zeros, 1e-12).unwrap().reshape((6, 25)).unwrap();
        let mean = y.mean(1).unwrap().to_vec1::<f64>().unwrap();
        let var = y.sqr().unwrap().mean(1).unwrap().to_vec1::<f64>().unwrap();
        assert!(mean.iter().all(|m| m.abs() < 1e-9));
        assert!(var.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }
}
