//! Population-aware cross-dataset evaluation for multi-channel time-series
//! classification.

// Validation uses negated comparisons on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod classifier;
pub mod cohort;
pub mod config;
pub mod eval;
pub mod frame;
pub mod montage;
pub mod runner;
pub mod seed;
pub mod signal;
pub mod theory;

pub use analytics::{Metric, Metrics, PatientPrediction};
pub use classifier::{Checkpoint, ModelKind, ModelSpec, TrainSchedule};
pub use cohort::{CohortManifest, SyntheticConfig};
pub use config::RunConfig;
pub use eval::{EvalConfig, EvaluationPlan, EvaluationResult, Regime};
pub use frame::SpectrogramFrame;
pub use montage::{build_reference_montage, ChannelMask, Montage};
pub use signal::PipelineConfig;
