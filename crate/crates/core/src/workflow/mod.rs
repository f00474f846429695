//! End-to-end runs: configuration, cross-validation, the two weakly
//! supervised pipelines averaged over seeds, forest density maps and
//! report tables.

mod config;
mod data;
mod density;
mod runs;
mod table;

pub use config::{DensityConfig, Paths, Profile, RunConfig, Workflow};
pub use data::{Dataset, TileData};
pub use density::{forest_density, DensityMap};
pub use runs::{
    run_supervised_cv, run_weak, train_weak_translator, CvOutcome, Dispersion, FoldRun, SeedRun, SeedSummary,
    WeakMode, WeakOutcome,
};
pub use table::{report_table, summary_table, TABLE_CLASSES};
