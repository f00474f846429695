use rand::Rng;

use crate::corpus::ClassId;
use crate::raster::{reflect_index, Raster, Rgb};

/// A crop of a raster resized by some factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropWindow {
    pub resized: (usize, usize),
    pub offset: (usize, usize),
    pub crop_px: usize,
}

/// Samples a scale factor in `scale_range` and a uniform `crop_px` square
/// inside a raster of `shape` resized by that factor.
pub fn sample_window<R: Rng + ?Sized>(
    shape: (usize, usize),
    crop_px: usize,
    scale_range: (f64, f64),
    rng: &mut R,
) -> CropWindow {
    let (h, w) = shape;
    let (lo, hi) = scale_range;
    let s = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let rh = ((h as f64 * s).round() as usize).max(1);
    let rw = ((w as f64 * s).round() as usize).max(1);
    let oy = rng.random_range(0..=rh.max(crop_px) - crop_px);
    let ox = rng.random_range(0..=rw.max(crop_px) - crop_px);
    CropWindow {
        resized: (rh, rw),
        offset: (oy, ox),
        crop_px,
    }
}

/// Resizes the pair (bilinear for the image, nearest neighbour for labels)
/// and cuts a random square. A resized side shorter than the crop is padded
/// at the bottom/right first: mirrored for the image, background for labels.
///
/// Only the crop window is resampled; the full resized raster is never
/// materialised.
pub fn random_resized_crop<R: Rng + ?Sized>(
    image: &Raster<Rgb>,
    labels: &Raster<ClassId>,
    crop_px: usize,
    scale_range: (f64, f64),
    rng: &mut R,
) -> (Raster<Rgb>, Raster<ClassId>) {
    let win = sample_window(image.shape(), crop_px, scale_range, rng);
    (resample_image(image, &win), resample_labels(labels, &win))
}

/// The crop at `(oy, ox)` of the pair resized to `resized`.
pub fn resample_window(
    image: &Raster<Rgb>,
    labels: &Raster<ClassId>,
    resized: (usize, usize),
    offset: (usize, usize),
    crop_px: usize,
) -> (Raster<Rgb>, Raster<ClassId>) {
    let win = CropWindow {
        resized,
        offset,
        crop_px,
    };
    (resample_image(image, &win), resample_labels(labels, &win))
}

struct Tap {
    i0: usize,
    i1: usize,
    t: f64,
    nearest: Option<usize>,
}

// bilinear taps, and the nearest source index for positions inside the
// resized extent
fn taps(n: usize, len: usize, rlen: usize, off: usize) -> Vec<Tap> {
    let f = len as f64 / rlen as f64;
    (0..n)
        .map(|i| {
            let y = off + i;
            let yr = reflect_index(y, rlen);
            let src = ((yr as f64 + 0.5) * f - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            Tap {
                i0,
                i1: (i0 + 1).min(len - 1),
                t: src - i0 as f64,
                nearest: (y < rlen).then_some((((y as f64 + 0.5) * f).floor() as usize).min(len - 1)),
            }
        })
        .collect()
}

pub fn resample_image(image: &Raster<Rgb>, win: &CropWindow) -> Raster<Rgb> {
    let (h, w) = image.shape();
    let ty = taps(win.crop_px, h, win.resized.0, win.offset.0);
    let tx = taps(win.crop_px, w, win.resized.1, win.offset.1);
    Raster::from_fn(win.crop_px, win.crop_px, |r, c| {
        let (Tap { i0: y0, i1: y1, t: a, .. }, Tap { i0: x0, i1: x1, t: b, .. }) = (&ty[r], &tx[c]);
        let (a, b) = (*a, *b);
        let p00 = image.get(*y0, *x0);
        let p01 = image.get(*y0, *x1);
        let p10 = image.get(*y1, *x0);
        let p11 = image.get(*y1, *x1);
        let mut out = [0u8; 3];
        for k in 0..3 {
            let top = p00[k] as f64 * (1.0 - b) + p01[k] as f64 * b;
            let bot = p10[k] as f64 * (1.0 - b) + p11[k] as f64 * b;
            out[k] = (top * (1.0 - a) + bot * a).round().clamp(0.0, 255.0) as u8;
        }
        out
    })
}

pub fn resample_labels(labels: &Raster<ClassId>, win: &CropWindow) -> Raster<ClassId> {
    let (h, w) = labels.shape();
    let ty = taps(win.crop_px, h, win.resized.0, win.offset.0);
    let tx = taps(win.crop_px, w, win.resized.1, win.offset.1);
    Raster::from_fn(win.crop_px, win.crop_px, |r, c| match (ty[r].nearest, tx[c].nearest) {
        (Some(y), Some(x)) => *labels.get(y, x),
        _ => ClassId::Background,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn image(h: usize, w: usize) -> Raster<Rgb> {
        Raster::from_fn(h, w, |r, c| [(r * 3) as u8, (c * 5) as u8, (r ^ c) as u8])
    }

    fn labels(h: usize, w: usize) -> Raster<ClassId> {
        Raster::from_fn(h, w, |r, c| if (r / 3 + c / 4) % 2 == 0 { ClassId::Forest } else { ClassId::Roads })
    }

    #[test]
    fn unit_scale_full_crop_is_identity() {
        let (img, lab) = (image(20, 20), labels(20, 20));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, b) = random_resized_crop(&img, &lab, 20, (1.0, 1.0), &mut rng);
        assert_eq!(a, img);
        assert_eq!(b, lab);
    }

    #[test]
    fn constant_labels_stay_constant() {
        let lab = Raster::filled(30, 30, ClassId::Forest);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (_, b) = random_resized_crop(&image(30, 30), &lab, 16, (0.7, 1.4), &mut rng);
            assert!(b.data().iter().all(|&c| c == ClassId::Forest));
        }
    }

    #[test]
    fn same_seed_same_crop() {
        let (img, lab) = (image(40, 33), labels(40, 33));
        let a = random_resized_crop(&img, &lab, 24, (0.7, 1.4), &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_resized_crop(&img, &lab, 24, (0.7, 1.4), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn undersized_input_is_padded_with_background() {
        let lab = Raster::filled(10, 10, ClassId::Forest);
        let (img, out) = resample_window(&image(10, 10), &lab, (10, 10), (0, 0), 14);
        assert_eq!(img.shape(), (14, 14));
        assert_eq!(*out.get(9, 9), ClassId::Forest);
        assert_eq!(*out.get(10, 3), ClassId::Background);
        // mirrored, edge not repeated
        assert_eq!(img.get(10, 0), image(10, 10).get(8, 0));
    }

    #[test]
    fn doubling_repeats_each_label_twice() {
        let lab = labels(8, 8);
        let (_, out) = resample_window(&image(8, 8), &lab, (16, 16), (0, 0), 16);
        for r in 0..16 {
            for c in 0..16 {
                assert_eq!(out.get(r, c), lab.get(r / 2, c / 2));
            }
        }
    }

    proptest! {
        #[test]
        fn crops_never_invent_classes(seed in 0u64..1000, crop in 4usize..40, h in 8usize..40, w in 8usize..40) {
            let lab = Raster::from_fn(h, w, |r, c| if r < h / 2 { ClassId::Hydrography } else if c % 7 == 0 { ClassId::Buildings } else { ClassId::Background });
            let src: BTreeSet<_> = lab.data().iter().copied().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (img, out) = random_resized_crop(&image(h, w), &lab, crop, (0.7, 1.4), &mut rng);
            prop_assert_eq!(img.shape(), (crop, crop));
            // background may appear only through padding, and the source has it
            prop_assert!(out.data().iter().all(|c| src.contains(c)));
        }
    }
}
