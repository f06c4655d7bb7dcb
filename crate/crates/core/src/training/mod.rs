//! Objectives, parameter registry and the full-batch training loop.

mod checkpoint;
mod loss;
mod model;
mod params;
mod train;


pub use checkpoint::{write_loss_log, Checkpoint, CHECKPOINT_VERSION};
pub use loss::{loss_odp, loss_reconstruction, od_distributions, total_loss, LossBreakdown, LOG_FLOOR};
pub use model::{forward, loss_and_gradients, predicted_destinations, Forward, Prepared};
pub use params::{Ablation, AblationVariant, ModelParams, ParamEntry, TrainConfig};
pub use train::{train, train_prepared, EpochLog, TrainOutcome};
