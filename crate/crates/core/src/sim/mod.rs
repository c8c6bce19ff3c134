//! Simulated annotators, the CI-narrowing experiment and evaluation metrics.

pub mod annotator;
pub mod experiment;
pub mod metrics;

pub use annotator::{label_query, AnnotatorMode, LabelError, SimulatedAnnotator};
pub use experiment::{ci_narrowing_experiment, ExperimentConfig, ExperimentError, ExperimentRow};
pub use metrics::{
    adience_group, cumulative_accuracy, evaluate, group_accuracy, MetricError, MetricReport, ADIENCE_GROUPS, CA_RULE,
    DEFAULT_CA_LEVELS,
};
