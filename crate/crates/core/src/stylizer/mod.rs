//! Synthetic modern maps: vector features are filtered to the level of detail
//! of a target collection, scan-converted into label rasters, then painted
//! with a palette that imitates that collection.

mod features;
mod lod;
mod palette;
mod rasterize;
mod style;

pub use features::{parse_features, read_features, write_features, Geometry, VectorFeature};
pub use lod::adapt_lod;
pub use palette::{colorize, declassify, Palette};
pub use rasterize::{rasterize, rasterize_grid};
pub use style::{BuildingMode, LevelOfDetail, StyleSpec};
