//! Training orchestration: the four modes (st, st-afl, at, at-afl), the
//! warmup + cosine recipe, seeded replicates and bit-exact checkpoints.

pub mod checkpoint;
pub mod config;
pub mod run;
pub mod schedule;
pub mod sgd;

pub use checkpoint::{load_checkpoint, resume, save_checkpoint, CheckpointHeader};
pub use config::{TrainConfig, TrainMode};
pub use run::{
    config_hash, initial_state, mean_of, run_replicates, train, train_epoch_range, train_epochs,
    EpochStats, TrainHistory, TrainOutcome, TrainState,
};
pub use schedule::lr_schedule;
pub use sgd::sgd_step;
