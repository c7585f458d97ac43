//! Losses, the Adam optimizer, the training loop and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use loss::{cross_entropy_loss, smoothing_loss, total_loss, LossGrad, LossWeights};
pub use train::{train, train_with, EpochRecord, TrainConfig, TrainingHistory};
