//! Dataset generation, pretraining, curriculum training, evaluation and
//! benchmarking.

pub mod artifacts;
pub mod bench;
pub mod config;
pub mod data;
pub mod eval;
pub mod pipeline;
pub mod pretrain;
pub mod train;

pub use artifacts::ModelArtifact;
pub use bench::{bench, BenchReport};
pub use config::{HarnessConfig, RunConfig};
pub use data::{gen_dataset, DatasetRecord, GenSummary};
pub use eval::{eval_policy, EraArtifacts, MetricsReport, PolicyKind};
pub use pretrain::{pretrain_artifacts, PretrainOutput, PretrainSummary};
pub use train::{train_curriculum, TrainEpisodeLog};
