//! Adam and the mini-batch training loop.

mod adam;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{evaluate, train, write_training_log, EpochLog, Evaluation, TrainConfig};
