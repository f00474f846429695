//! Overall accuracy, IoU and the misalignment-tolerant dilated IoU.
//!
//! The dilated IoU of a class with predicted pixels `P` and true pixels `T` is
//!
//! ```text
//! |(Dil(P) ∩ T) ∪ (P ∩ Dil(T))| / |P ∪ T|
//! ```
//!
//! where `Dil` grows a set by `w` pixels in every direction. Ratios are kept
//! in `[0, 1]`; rendering as percentages happens at the reporting layer.

mod mask;
mod report;

pub use mask::{dilate, dilate_raster, diou, diou_counts, iou, ClassMask, OverlapCounts};
pub use report::{aggregate_reports, evaluate_pair, mean_class_score, MetricReport};

use serde::{Deserialize, Serialize};

/// Shape of the neighbourhood used by the dilation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructuringElement {
    /// Chebyshev ball: a `(2w+1)²` square.
    #[default]
    Square,
    /// Euclidean ball: offsets with `dx² + dy² ≤ w²`.
    Disk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub dilation_radius_w: usize,
    pub structuring_element: StructuringElement,
    pub exclude_background_from_mean: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            dilation_radius_w: 3,
            structuring_element: StructuringElement::Square,
            exclude_background_from_mean: true,
        }
    }
}

impl MetricConfig {
    pub fn with_radius(w: usize) -> Self {
        Self {
            dilation_radius_w: w,
            ..Self::default()
        }
    }
}
