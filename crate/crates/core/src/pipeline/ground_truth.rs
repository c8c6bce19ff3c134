//! Target distributions for training: exact ages, age groups, or posteriors.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{AgeDistribution, DistributionError};
use crate::grid::AgeGrid;

/// Standard deviation of the Gaussian placed on exact-age labels.
pub const EXACT_AGE_SIGMA: f64 = 2.0;

/// How a training label is turned into a target distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruthSpec {
    /// Known age; becomes a discretized Gaussian with σ = 2.
    ExactAge { age: u32 },
    /// Age range `[lo, hi]`; an open group (`hi = None`) runs to the grid's
    /// maximum age.
    AgeGroup {
        lo: u32,
        #[serde(default)]
        hi: Option<u32>,
    },
    /// A posterior collected by annotation, used as-is.
    RawPosterior { posterior: AgeDistribution },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundTruthError {
    #[error("age {age} is outside grid {grid}")]
    AgeOutOfGrid { age: u32, grid: AgeGrid },
    #[error("age group has lo {lo} > hi {hi}")]
    InvalidGroup { lo: u32, hi: u32 },
    #[error("age group [{lo}, {hi}] does not overlap grid {grid}")]
    EmptySupport { lo: u32, hi: u32, grid: AgeGrid },
    #[error("posterior is on grid {found}, expected {expected}")]
    GridMismatch { expected: AgeGrid, found: AgeGrid },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

impl GroundTruthSpec {
    /// Point label for losses that need one: the exact age, otherwise the
    /// mode of the target distribution.
    pub fn point_age(&self, grid: AgeGrid) -> Result<u32, GroundTruthError> {
        match self {
            GroundTruthSpec::ExactAge { age } if grid.contains(*age) => Ok(*age),
            GroundTruthSpec::ExactAge { age } => Err(GroundTruthError::AgeOutOfGrid { age: *age, grid }),
            _ => Ok(build_gt_posterior(self, grid)?.mode()),
        }
    }
}

/// Builds the target distribution `P_gt(a)` on `grid`.
pub fn build_gt_posterior(spec: &GroundTruthSpec, grid: AgeGrid) -> Result<AgeDistribution, GroundTruthError> {
    match spec {
        GroundTruthSpec::ExactAge { age } => {
            if !grid.contains(*age) {
                return Err(GroundTruthError::AgeOutOfGrid { age: *age, grid });
            }
            let mu = *age as f64;
            let two_var = 2.0 * EXACT_AGE_SIGMA * EXACT_AGE_SIGMA;
            let weights: Vec<f64> = grid
                .ages()
                .map(|a| {
                    let d = a as f64 - mu;
                    libm::exp(-d * d / two_var)
                })
                .collect();
            Ok(AgeDistribution::from_weights(grid, weights)?)
        }
        GroundTruthSpec::AgeGroup { lo, hi } => {
            let hi_age = hi.unwrap_or(grid.max_age());
            if *lo > hi_age {
                return Err(GroundTruthError::InvalidGroup { lo: *lo, hi: hi_age });
            }
            let lo_c = (*lo).max(grid.min_age());
            let hi_c = hi_age.min(grid.max_age());
            if lo_c > hi_c {
                return Err(GroundTruthError::EmptySupport {
                    lo: *lo,
                    hi: hi_age,
                    grid,
                });
            }
            let weights = grid
                .ages()
                .map(|a| if (lo_c..=hi_c).contains(&a) { 1.0 } else { 0.0 })
                .collect();
            Ok(AgeDistribution::from_weights(grid, weights)?)
        }
        GroundTruthSpec::RawPosterior { posterior } => {
            if posterior.grid() != grid {
                return Err(GroundTruthError::GridMismatch {
                    expected: grid,
                    found: posterior.grid(),
                });
            }
            Ok(AgeDistribution::from_weights(grid, posterior.mass().to_vec())?)
        }
    }
}
