//! Unpaired historical ↔ modern style translation (CycleGAN with an extra
//! L1 term on aligned footprints) and the translate-then-segment chain.

mod checkpoint;
mod config;
mod infer;
mod loss;
mod networks;
mod train;

pub use checkpoint::{load_trans_checkpoint, save_trans_checkpoint, TransCheckpoint};
pub use config::{LossWeights, TransConfig};
pub use infer::{preview_grid, translate_image, translate_then_segment};
pub use loss::{
    adversarial_loss, cycle_loss, generator_objective, identity_loss, l1, lsgan_disc, lsgan_gen, translation_loss,
    AlignedBatch, GeneratorPass, GeneratorTerms, LossValue,
};
pub use networks::{Identity, PatchDiscriminator, ResnetGenerator, TranslationModelPair, Translator};
pub use train::{
    pair_domains, planned_steps, train_translation, train_translation_with_callback, StepRecord, TransPair,
    TransState,
};
