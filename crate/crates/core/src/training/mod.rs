//! Loss aggregation, optimizer, schedule and the training loop.

mod loss;
mod optim;
mod train;

pub use loss::{deep_supervision_loss, downsample_label_batch, one_hot, LossReport, ScoredLoss};
pub use optim::{poly_lr, Sgd};
pub use train::{stack_patches, train_loop, Case, EpochStats, TrainConfig};
