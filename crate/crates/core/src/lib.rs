//! Segmentation of historical map collections into land-cover classes.
//!
//! Three baselines share one toolbox: a supervised U-Net trained on manual
//! historical labels, a U-Net trained directly on modern (weak) labels, and a
//! translate-then-segment chain that first restyles historical maps as modern
//! ones with a cycle-consistent GAN pulled towards the aligned modern tile.
//! Predictions are scored with a misalignment-tolerant dilated IoU.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod raster;
pub mod segnet;
pub mod stylizer;
pub mod toygen;
pub mod translator;
pub mod workflow;

pub use corpus::{ClassId, Collection, Georef, LabelRaster, LabelSource, Tile, NUM_CLASSES};
pub use error::{Error, Result};
pub use raster::{Raster, Rgb};
