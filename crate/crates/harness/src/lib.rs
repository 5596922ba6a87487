//! Training, evaluation, ablation and reporting for the multi-view
//! lifting-pose pipeline.

pub mod ablation;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod report;
pub mod train;

pub use ablation::{run_ablation, AblationTable, Suite};
pub use config::{ExperimentConfig, InputScaling, Stage, TrainConfig};
pub use data::{LoadedSplit, Sample};
pub use error::{HarnessError, Result};
pub use eval::{evaluate_mpjpe, metrics_from_predictions, mpjpe, MetricsReport};
pub use features::FeatureCache;
pub use report::emit_report;
pub use train::{train_stage1, train_stage2, train_stage2_joint, TrainReport};
