//! Pre-training loops, learning-rate schedule, checkpoints and drift tracking.

pub mod checkpoint;
pub mod drift;
pub mod mlm;
pub mod pretrain;
pub mod schedule;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_atomic, Checkpoint, NamedTensor,
    FORMAT_VERSION, MAGIC,
};
pub use drift::{drift_between, track_drift, DriftEntry, DriftReport, Snapshot};
pub use mlm::{pretrain_mlm, MASK_PROBABILITY};
pub use pretrain::{batch_loss_on, hierarchy_labels, pretrain, PretrainOutcome, StepLog, TrainConfig};
pub use schedule::{linear_lr, steps_per_epoch};
