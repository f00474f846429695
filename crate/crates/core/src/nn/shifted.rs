//! Stride-1 convolution as k² shifted GEMMs over a padded, channel-major
//! copy of the input. Output position `q` on the padded grid reads input
//! `q + ky·Wp + kx`, so every kernel tap is one matrix product against an
//! offset view of the same buffer; positions that straddle a row or image
//! boundary are computed and thrown away.

use candle_core::{CpuStorage, CustomOp2, Layout, Shape, Tensor};

use crate::raster::reflect_index;

pub(crate) trait Scalar: Copy + Default + std::ops::AddAssign + 'static {
    const ONE: Self;
}

impl Scalar for f32 {
    const ONE: Self = 1.0;
}

impl Scalar for f64 {
    const ONE: Self = 1.0;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PadMode {
    Zero,
    Reflect,
}

#[derive(Clone, Copy, Debug)]
struct Dims {
    b: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    mode: PadMode,
}

impl Dims {
    fn hp(&self) -> usize {
        self.h + 2 * self.pad
    }
    fn wp(&self) -> usize {
        self.w + 2 * self.pad
    }
    fn ho(&self) -> usize {
        self.hp() + 1 - self.k
    }
    fn wo(&self) -> usize {
        self.wp() + 1 - self.k
    }
    /// Length of one channel of the padded buffer.
    fn len(&self) -> usize {
        self.b * self.hp() * self.wp()
    }
    /// Number of padded-grid output columns computed.
    fn cols(&self) -> usize {
        self.len() - (self.k - 1) * (self.wp() + 1)
    }
    /// Source pixel of padded coordinate `(py, px)`, if any.
    fn source(&self, py: usize, px: usize) -> Option<(usize, usize)> {
        let (y, x) = (py as isize - self.pad as isize, px as isize - self.pad as isize);
        match self.mode {
            PadMode::Reflect => Some((reflect_index(y.unsigned_abs(), self.h), reflect_index(x.unsigned_abs(), self.w))),
            PadMode::Zero => {
                (y >= 0 && x >= 0 && (y as usize) < self.h && (x as usize) < self.w).then(|| (y as usize, x as usize))
            }
        }
    }
}

/// `dst = [dst +] lhs · rhs` on strided views; bounds are the caller's job,
/// checked here in debug builds through slice indexing of the extremes.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Scalar>(
    (m, n, k): (usize, usize, usize),
    dst: &mut [T],
    (dst_rs, dst_cs): (usize, usize),
    lhs: &[T],
    (lhs_rs, lhs_cs): (usize, usize),
    rhs: &[T],
    (rhs_rs, rhs_cs): (usize, usize),
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rs: usize, cs: usize, r: usize, c: usize| (r - 1) * rs + (c - 1) * cs;
    assert!(last(dst_rs, dst_cs, m, n) < dst.len());
    assert!(k == 0 || last(lhs_rs, lhs_cs, m, k) < lhs.len());
    assert!(k == 0 || last(rhs_rs, rhs_cs, k, n) < rhs.len());
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        gemm::gemm(
            m,
            n,
            k,
            dst.as_mut_ptr(),
            dst_cs as isize,
            dst_rs as isize,
            accumulate,
            lhs.as_ptr(),
            lhs_cs as isize,
            lhs_rs as isize,
            rhs.as_ptr(),
            rhs_cs as isize,
            rhs_rs as isize,
            T::ONE,
            T::ONE,
            false,
            false,
            false,
            gemm::Parallelism::None,
        );
    }
}

/// `(b, c, h, w)` → padded `(c, b, hp, wp)`.
fn pad_channel_major<T: Scalar>(x: &[T], d: &Dims, channels: usize) -> Vec<T> {
    let (hp, wp) = (d.hp(), d.wp());
    let mut out = vec![T::default(); channels * d.len()];
    for c in 0..channels {
        for b in 0..d.b {
            let src = &x[(b * channels + c) * d.h * d.w..][..d.h * d.w];
            let dst = &mut out[c * d.len() + b * hp * wp..][..hp * wp];
            for py in 0..hp {
                for px in 0..wp {
                    if let Some((y, xx)) = d.source(py, px) {
                        dst[py * wp + px] = src[y * d.w + xx];
                    }
                }
            }
        }
    }
    out
}

fn forward<T: Scalar>(x: &[T], w: &[T], d: &Dims) -> Vec<T> {
    let (l, n, kk) = (d.len(), d.cols(), d.k * d.k);
    let xp = pad_channel_major(x, d, d.c_in);
    let mut acc = vec![T::default(); d.c_out * n];
    for ky in 0..d.k {
        for kx in 0..d.k {
            let off = ky * d.wp() + kx;
            gemm(
                (d.c_out, n, d.c_in),
                &mut acc,
                (n, 1),
                &w[ky * d.k + kx..],
                (d.c_in * kk, kk),
                &xp[off..],
                (l, 1),
                ky + kx > 0,
            );
        }
    }
    let (ho, wo, plane) = (d.ho(), d.wo(), d.hp() * d.wp());
    let mut y = Vec::with_capacity(d.b * d.c_out * ho * wo);
    for b in 0..d.b {
        for co in 0..d.c_out {
            for oy in 0..ho {
                let start = co * n + b * plane + oy * d.wp();
                y.extend_from_slice(&acc[start..start + wo]);
            }
        }
    }
    y
}

/// Scatters `dy (b, c_out, ho, wo)` onto the padded output grid.
fn grid_grad<T: Scalar>(dy: &[T], d: &Dims) -> Vec<T> {
    let (n, ho, wo, plane) = (d.cols(), d.ho(), d.wo(), d.hp() * d.wp());
    let mut g = vec![T::default(); d.c_out * n];
    for b in 0..d.b {
        for co in 0..d.c_out {
            for oy in 0..ho {
                let start = co * n + b * plane + oy * d.wp();
                let src = &dy[((b * d.c_out + co) * ho + oy) * wo..][..wo];
                g[start..start + wo].copy_from_slice(src);
            }
        }
    }
    g
}

fn backward_input<T: Scalar>(dy: &[T], w: &[T], d: &Dims) -> Vec<T> {
    let (l, n, kk) = (d.len(), d.cols(), d.k * d.k);
    let g = grid_grad(dy, d);
    let mut dxp = vec![T::default(); d.c_in * l];
    for ky in 0..d.k {
        for kx in 0..d.k {
            let off = ky * d.wp() + kx;
            gemm(
                (d.c_in, n, d.c_out),
                &mut dxp[off..],
                (l, 1),
                &w[ky * d.k + kx..],
                (kk, d.c_in * kk),
                &g,
                (n, 1),
                true,
            );
        }
    }
    // fold the padded buffer back onto its sources
    let (hp, wp) = (d.hp(), d.wp());
    let mut dx = vec![T::default(); d.b * d.c_in * d.h * d.w];
    for c in 0..d.c_in {
        for b in 0..d.b {
            let src = &dxp[c * l + b * hp * wp..][..hp * wp];
            let dst = &mut dx[(b * d.c_in + c) * d.h * d.w..][..d.h * d.w];
            for py in 0..hp {
                for px in 0..wp {
                    if let Some((y, x)) = d.source(py, px) {
                        dst[y * d.w + x] += src[py * wp + px];
                    }
                }
            }
        }
    }
    dx
}

fn backward_weight<T: Scalar>(x: &[T], dy: &[T], d: &Dims) -> Vec<T> {
    let (l, n, kk) = (d.len(), d.cols(), d.k * d.k);
    let xp = pad_channel_major(x, d, d.c_in);
    let g = grid_grad(dy, d);
    let mut dw = vec![T::default(); d.c_out * d.c_in * kk];
    for ky in 0..d.k {
        for kx in 0..d.k {
            let off = ky * d.wp() + kx;
            gemm(
                (d.c_out, d.c_in, n),
                &mut dw[ky * d.k + kx..],
                (d.c_in * kk, kk),
                &g,
                (n, 1),
                &xp[off..],
                (1, l),
                false,
            );
        }
    }
    dw
}

fn slice<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((a, b)) => Ok(&data[a..b]),
        None => candle_core::bail!("shifted conv expects contiguous operands"),
    }
}

macro_rules! dispatch {
    ($s1:expr, $l1:expr, $s2:expr, $l2:expr, |$a:ident, $b:ident| $body:expr) => {
        match ($s1, $s2) {
            (CpuStorage::F32(v1), CpuStorage::F32(v2)) => {
                let ($a, $b) = (slice(v1, $l1)?, slice(v2, $l2)?);
                CpuStorage::F32($body)
            }
            (CpuStorage::F64(v1), CpuStorage::F64(v2)) => {
                let ($a, $b) = (slice(v1, $l1)?, slice(v2, $l2)?);
                CpuStorage::F64($body)
            }
            _ => candle_core::bail!("shifted conv supports matching f32/f64 operands only"),
        }
    };
}

struct Conv(Dims);
struct ConvBwdInput(Dims);
struct ConvBwdWeight(Dims);

impl CustomOp2 for Conv {
    fn name(&self) -> &'static str {
        "shifted-conv2d"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let d = &self.0;
        let out = dispatch!(s1, l1, s2, l2, |x, w| forward(x, w, d));
        Ok((out, Shape::from((d.b, d.c_out, d.ho(), d.wo()))))
    }

    fn bwd(&self, x: &Tensor, w: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let grad = grad.contiguous()?;
        let dx = grad.apply_op2_no_bwd(w, &ConvBwdInput(self.0))?;
        let dw = x.apply_op2_no_bwd(&grad, &ConvBwdWeight(self.0))?;
        Ok((Some(dx), Some(dw)))
    }
}

impl CustomOp2 for ConvBwdInput {
    fn name(&self) -> &'static str {
        "shifted-conv2d-bwd-input"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let d = &self.0;
        let out = dispatch!(s1, l1, s2, l2, |dy, w| backward_input(dy, w, d));
        Ok((out, Shape::from((d.b, d.c_in, d.h, d.w))))
    }
}

impl CustomOp2 for ConvBwdWeight {
    fn name(&self) -> &'static str {
        "shifted-conv2d-bwd-weight"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let d = &self.0;
        let out = dispatch!(s1, l1, s2, l2, |x, dy| backward_weight(x, dy, d));
        Ok((out, Shape::from((d.c_out, d.c_in, d.k, d.k))))
    }
}

/// Stride-1 convolution with built-in zero or mirror padding.
pub(crate) fn conv2d_s1(x: &Tensor, weight: &Tensor, pad: usize, mode: PadMode) -> candle_core::Result<Tensor> {
    let (b, c_in, h, w) = x.dims4()?;
    let (c_out, c_in2, k, k2) = weight.dims4()?;
    if c_in != c_in2 || k != k2 {
        candle_core::bail!("conv2d: input has {c_in} channels, kernel is {c_out}x{c_in2}x{k}x{k2}");
    }
    if h + 2 * pad < k || w + 2 * pad < k {
        candle_core::bail!("conv input {h}x{w} (pad {pad}) smaller than kernel {k}");
    }
    let d = Dims {
        b,
        c_in,
        c_out,
        h,
        w,
        k,
        pad,
        mode,
    };
    x.contiguous()?.apply_op2(&weight.contiguous()?, Conv(d))
}
