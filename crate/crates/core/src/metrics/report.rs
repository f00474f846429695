use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mask::{diou_counts, OverlapCounts};
use super::MetricConfig;
use crate::corpus::{ClassId, LabelRaster, NUM_CLASSES};
use crate::error::{Error, Result};

/// Confusion matrix (rows = truth, columns = prediction) together with the
/// scores derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub diou_counts: [OverlapCounts; NUM_CLASSES],
    pub exclude_background_from_mean: bool,
    pub oa: f64,
    pub per_class_diou: BTreeMap<ClassId, f64>,
    pub mean_diou: f64,
}

/// Arithmetic mean of per-class scores, optionally leaving out background.
pub fn mean_class_score(per_class: &BTreeMap<ClassId, f64>, exclude_background: bool) -> f64 {
    let vals: Vec<f64> = per_class
        .iter()
        .filter(|(c, _)| !(exclude_background && **c == ClassId::Background))
        .map(|(_, v)| *v)
        .collect();
    if vals.is_empty() {
        return 0.0;
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

impl MetricReport {
    pub fn from_counts(
        confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
        diou_counts: [OverlapCounts; NUM_CLASSES],
        exclude_background_from_mean: bool,
    ) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..NUM_CLASSES).map(|i| confusion[i][i]).sum();
        let oa = if total == 0 {
            1.0
        } else {
            trace as f64 / total as f64
        };
        let per_class_diou: BTreeMap<ClassId, f64> = ClassId::ALL
            .iter()
            .map(|&c| (c, diou_counts[c.index()].ratio()))
            .collect();
        let mean_diou = mean_class_score(&per_class_diou, exclude_background_from_mean);
        Self {
            confusion,
            diou_counts,
            exclude_background_from_mean,
            oa,
            per_class_diou,
            mean_diou,
        }
    }

    pub fn total_pixels(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores one prediction against its ground truth.
pub fn evaluate_pair(
    pred: &LabelRaster,
    truth: &LabelRaster,
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    pred.data.ensure_shape(truth.shape())?;
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (p, t) in pred.data.data().iter().zip(truth.data.data()) {
        confusion[t.index()][p.index()] += 1;
    }
    let mut counts = [OverlapCounts::default(); NUM_CLASSES];
    for c in ClassId::ALL {
        counts[c.index()] = diou_counts(
            &pred.data.map(|&v| v == c),
            &truth.data.map(|&v| v == c),
            cfg.dilation_radius_w,
            cfg.structuring_element,
        )?;
    }
    Ok(MetricReport::from_counts(
        confusion,
        counts,
        cfg.exclude_background_from_mean,
    ))
}

/// Pools reports by summing confusion matrices and dIoU pixel counts, then
/// recomputing every ratio.
pub fn aggregate_reports<'a>(
    reports: impl IntoIterator<Item = &'a MetricReport>,
) -> Result<MetricReport> {
    let mut it = reports.into_iter();
    let first = it.next().ok_or(Error::EmptyAggregate)?;
    let mut confusion = first.confusion;
    let mut counts = first.diou_counts;
    for r in it {
        for (row, add) in confusion.iter_mut().zip(r.confusion.iter()) {
            for (a, b) in row.iter_mut().zip(add) {
                *a += b;
            }
        }
        for (a, b) in counts.iter_mut().zip(r.diou_counts.iter()) {
            *a = a.add(b);
        }
    }
    Ok(MetricReport::from_counts(
        confusion,
        counts,
        first.exclude_background_from_mean,
    ))
}
