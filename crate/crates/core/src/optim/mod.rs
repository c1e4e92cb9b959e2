//! Training objective, optimizer, learning-rate schedule and the epoch loop.

mod adamw;
mod loss;
mod schedule;
mod train;

pub use adamw::{AdamW, AdamWConfig, OptimState};
pub use loss::{smoothed_ce, LossConfig};
pub use schedule::{lr_at, ScheduleConfig, ScheduleKind};
pub use train::{batch_loss, EpochStats, TrainConfig, TrainState, Trainer};
