use serde::{Deserialize, Serialize};

use super::{MetricConfig, StructuringElement};
use crate::corpus::ClassId;
use crate::error::Result;
use crate::raster::Raster;

/// Pixels of one class, either predicted or labelled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMask {
    pub class: ClassId,
    pub mask: Raster<bool>,
}

impl ClassMask {
    pub fn new(class: ClassId, mask: Raster<bool>) -> Self {
        Self { class, mask }
    }

    pub fn from_labels(labels: &Raster<ClassId>, class: ClassId) -> Self {
        Self {
            class,
            mask: labels.map(|&c| c == class),
        }
    }

    pub fn count(&self) -> u64 {
        count(&self.mask)
    }
}

fn count(m: &Raster<bool>) -> u64 {
    m.data().iter().filter(|&&b| b).count() as u64
}

/// `any` over a sliding window of half-width `w` along one axis, using a
/// running count so the cost is independent of `w`.
fn dilate_1d(src: &[bool], dst: &mut [bool], w: usize) {
    let n = src.len();
    let mut inside = 0usize;
    // window for index i is [i - w, i + w]
    for &b in src.iter().take(w.min(n)) {
        inside += b as usize;
    }
    for i in 0..n {
        if i + w < n {
            inside += src[i + w] as usize;
        }
        if i > w {
            inside -= src[i - w - 1] as usize;
        }
        dst[i] = inside > 0;
    }
}

/// Morphological dilation of a boolean raster. `w = 0` is the identity.
pub fn dilate_raster(mask: &Raster<bool>, w: usize, element: StructuringElement) -> Raster<bool> {
    if w == 0 {
        return mask.clone();
    }
    let (h, wd) = mask.shape();
    match element {
        StructuringElement::Square => {
            let mut rows = Raster::filled(h, wd, false);
            for r in 0..h {
                let s = &mask.data()[r * wd..(r + 1) * wd];
                let mut out = vec![false; wd];
                dilate_1d(s, &mut out, w);
                rows.data_mut()[r * wd..(r + 1) * wd].copy_from_slice(&out);
            }
            let mut out = Raster::filled(h, wd, false);
            let mut col = vec![false; h];
            let mut dcol = vec![false; h];
            for c in 0..wd {
                for r in 0..h {
                    col[r] = *rows.get(r, c);
                }
                dilate_1d(&col, &mut dcol, w);
                for r in 0..h {
                    out.set(r, c, dcol[r]);
                }
            }
            out
        }
        StructuringElement::Disk => {
            let wi = w as isize;
            let offsets: Vec<(isize, isize)> = (-wi..=wi)
                .flat_map(|dy| (-wi..=wi).map(move |dx| (dy, dx)))
                .filter(|(dy, dx)| dy * dy + dx * dx <= wi * wi)
                .collect();
            let mut out = Raster::filled(h, wd, false);
            for r in 0..h {
                for c in 0..wd {
                    if !*mask.get(r, c) {
                        continue;
                    }
                    for &(dy, dx) in &offsets {
                        let (rr, cc) = (r as isize + dy, c as isize + dx);
                        if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < wd {
                            out.set(rr as usize, cc as usize, true);
                        }
                    }
                }
            }
            out
        }
    }
}

pub fn dilate(mask: &ClassMask, w: usize, element: StructuringElement) -> ClassMask {
    ClassMask::new(mask.class, dilate_raster(&mask.mask, w, element))
}

/// Pixel counts behind a dilated-IoU ratio; summing them across tiles gives
/// the pooled (micro-averaged) score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub numerator: u64,
    pub denominator: u64,
}

impl OverlapCounts {
    /// Both-empty masks score 1.
    pub fn ratio(&self) -> f64 {
        if self.denominator == 0 {
            1.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            numerator: self.numerator + other.numerator,
            denominator: self.denominator + other.denominator,
        }
    }
}

pub fn iou(pred: &ClassMask, truth: &ClassMask) -> Result<f64> {
    pred.mask.ensure_shape(truth.mask.shape())?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&p, &t) in pred.mask.data().iter().zip(truth.mask.data()) {
        inter += (p && t) as u64;
        union += (p || t) as u64;
    }
    Ok(OverlapCounts {
        numerator: inter,
        denominator: union,
    }
    .ratio())
}

pub fn diou_counts(
    pred: &Raster<bool>,
    truth: &Raster<bool>,
    w: usize,
    element: StructuringElement,
) -> Result<OverlapCounts> {
    pred.ensure_shape(truth.shape())?;
    let dp = dilate_raster(pred, w, element);
    let dt = dilate_raster(truth, w, element);
    let mut counts = OverlapCounts::default();
    for i in 0..pred.data().len() {
        let (p, t) = (pred.data()[i], truth.data()[i]);
        counts.numerator += ((dp.data()[i] && t) || (p && dt.data()[i])) as u64;
        counts.denominator += (p || t) as u64;
    }
    Ok(counts)
}

pub fn diou(pred: &ClassMask, truth: &ClassMask, cfg: &MetricConfig) -> Result<f64> {
    Ok(diou_counts(
        &pred.mask,
        &truth.mask,
        cfg.dilation_radius_w,
        cfg.structuring_element,
    )?
    .ratio())
}
