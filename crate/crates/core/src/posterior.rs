//! Posterior over ages given a set of comparison events.

use alloc::vec::Vec;

use thiserror::Error;

use crate::comparison::{ComparisonEvent, LogisticModel};
use crate::distribution::{AgeDistribution, DistributionError};
use crate::grid::AgeGrid;

/// `ln(1e-300)`. Bins whose unnormalized log mass falls below this are zeroed.
pub const LOG_MASS_FLOOR: f64 = -690.775_527_898_213_7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    #[error("reference age {ref_age} is outside grid {grid}")]
    RefAgeOutOfGrid { ref_age: u32, grid: AgeGrid },
    #[error("comparisons are irreconcilable: every bin fell below the mass floor")]
    DegenerateEvidence,
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// `P(a | events) ∝ P(a) Π_m P(C_m | a)`, accumulated in the log domain.
///
/// The result does not depend on the order of `events`, and folding events in
/// one at a time gives the same distribution as passing them together.
pub fn posterior_from_events(
    model: &LogisticModel,
    prior: &AgeDistribution,
    events: &[ComparisonEvent],
) -> Result<AgeDistribution, PosteriorError> {
    let grid = prior.grid();
    if let Some(e) = events.iter().find(|e| !grid.contains(e.ref_age)) {
        return Err(PosteriorError::RefAgeOutOfGrid {
            ref_age: e.ref_age,
            grid,
        });
    }

    let log_mass: Vec<f64> = prior
        .iter()
        .map(|(age, p)| {
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let lw = events.iter().fold(libm::log(p), |acc, e| {
                acc + model.log_likelihood(e.ref_age, e.outcome, age)
            });
            if lw < LOG_MASS_FLOOR {
                f64::NEG_INFINITY
            } else {
                lw
            }
        })
        .collect();

    if log_mass.iter().all(|&w| w == f64::NEG_INFINITY) {
        return Err(PosteriorError::DegenerateEvidence);
    }
    Ok(AgeDistribution::from_log_weights(grid, &log_mass)?)
}
