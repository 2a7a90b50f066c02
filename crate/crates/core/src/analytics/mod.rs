//! Patient-level aggregation and metrics, directional transfer matrices,
//! population-scaling regression, stability summaries and channel maps.

mod maps;
mod metrics;
mod regression;
mod svg;
mod tables;

use thiserror::Error;

pub use maps::{channel_maps, min_max_normalize, ChannelMap};
pub use metrics::{
    aggregate_patient, confusion_metrics, patient_metrics, Metric, Metrics, PatientPrediction, Vote,
    DEFAULT_TAU,
};
pub use regression::{ols, scaling_points, scaling_regression, OlsFit};
pub use svg::render_map_svg;
pub use tables::{
    build_transfer_matrix, level_summary, level_table, stability, LevelRow, LevelSummary, TransferMatrix,
};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("no frame probabilities to aggregate")]
    EmptyFrameSet,
    #[error("prediction and label id sets differ (first mismatch: {0})")]
    IdMismatch(String),
    #[error("no result for train={train} test={test}")]
    MissingPlan { train: String, test: String },
    #[error("regression design is degenerate: all x values are equal")]
    DegenerateDesign,
    #[error("regression needs at least 3 points, found {0}")]
    TooFewPoints(usize),
    #[error("insufficient design for scaling regression: {0}")]
    InsufficientDesign(String),
}
