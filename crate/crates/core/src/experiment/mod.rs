//! Experiment orchestration: configuration, checkpoints, sweeps, metrics
//! and plots.

pub mod checkpoint;
pub mod config;
pub mod gradsuite;
pub mod metrics;
pub mod plot;
pub mod run;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use config::{AttackMode, ExperimentConfig};
pub use metrics::{MetricsRecord, Scenario};
pub use run::{Experiment, SecurePair};
