//! Sealing a query's comparisons into an exportable record.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::{ComparisonEvent, LogisticModel};
use crate::distribution::{AgeDistribution, CredibleInterval, OUTLIER_LEVEL};
use crate::posterior::{posterior_from_events, PosteriorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Labelled,
    Discarded,
}

/// Final label for one query. Discarded records keep their posterior so the
/// rejection can be audited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub query_id: String,
    pub posterior: AgeDistribution,
    pub mode: u32,
    pub ci90: CredibleInterval,
    pub events: Vec<ComparisonEvent>,
    pub status: RecordStatus,
}

impl AnnotationRecord {
    pub fn is_discarded(&self) -> bool {
        self.status == RecordStatus::Discarded
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FinalizeError {
    #[error("cannot finalize an annotation without comparisons")]
    NoEvidence,
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
}

/// Computes the posterior, its mode and 90% interval, and marks the record
/// discarded when the interval is wider than 15 years.
pub fn finalize_annotation(
    query_id: impl Into<String>,
    events: Vec<ComparisonEvent>,
    model: &LogisticModel,
    prior: &AgeDistribution,
) -> Result<AnnotationRecord, FinalizeError> {
    if events.is_empty() {
        return Err(FinalizeError::NoEvidence);
    }
    let posterior = posterior_from_events(model, prior, &events)?;
    let status = if posterior.is_outlier() {
        RecordStatus::Discarded
    } else {
        RecordStatus::Labelled
    };
    Ok(AnnotationRecord {
        query_id: query_id.into(),
        mode: posterior.mode(),
        ci90: posterior.confidence_interval(OUTLIER_LEVEL),
        posterior,
        events,
        status,
    })
}
