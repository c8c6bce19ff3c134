//! The labelling protocol: bracketing reference selection, ground-truth
//! targets, and finalization of a query's comparisons into a record.

pub mod ground_truth;
pub mod record;
pub mod selection;

pub use ground_truth::{build_gt_posterior, GroundTruthError, GroundTruthSpec};
pub use record::{finalize_annotation, AnnotationRecord, FinalizeError, RecordStatus};
pub use selection::{
    rough_age_estimate, select_references, select_references_with_fallback, synthetic_reference_pool, AdaptiveSelector,
    Gender, QueryItem, ReferenceItem, Relaxation, SelectionError, SelectionPolicy, Stratum,
};
