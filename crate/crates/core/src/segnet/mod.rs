//! U-Net segmentation: model, loss, augmentation, training loops, tiled
//! inference and checkpoints.

mod augment;
mod checkpoint;
mod config;
mod loss;
mod model;
mod train;

pub use augment::{
    random_resized_crop, resample_image, resample_labels, resample_window, sample_window, CropWindow,
};
pub use checkpoint::{load_seg_checkpoint, save_seg_checkpoint, SegCheckpoint};
pub use config::SegConfig;
pub use loss::{labels_to_tensor, one_hot, seg_loss};
pub use model::{build_model, predict_tile, SegModel};
pub use train::{
    evaluate_examples, pair_weak, train_supervised, train_weak, train_with_callback, EpochRecord,
    SegExample, TrainState,
};
