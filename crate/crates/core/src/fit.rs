//! Fitting the logistic steepness to observed comparison frequencies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::LogisticModel;
use crate::math::sigmoid;

pub const BETA_LOWER: f64 = 1e-3;
pub const BETA_UPPER: f64 = 10.0;
pub const BETA_TOLERANCE: f64 = 1e-6;

/// Fraction of annotators who judged A older than B at a given age gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSample {
    /// Age of A minus age of B, in years.
    pub age_diff: i32,
    pub frac_older: f64,
}

impl BetaSample {
    pub fn new(age_diff: i32, frac_older: f64) -> Self {
        Self { age_diff, frac_older }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least two samples with distinct age differences")]
    TooFewSamples,
    #[error("sample {index}: frac_older must be a finite value in [0, 1]")]
    InvalidFraction { index: usize },
    #[error("objective is flat in beta; the data carry no information about steepness")]
    FitDiverged,
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol`; returns the bracket
/// midpoint and its objective value.
pub fn golden_section_minimize(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    // 1/φ
    const INV_PHI: f64 = 0.618_033_988_749_894_9;

    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

fn squared_error(samples: &[BetaSample], beta: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let x = beta * s.age_diff as f64;
            // on the saturated side work with the complement so the residual
            // keeps its precision when σ rounds to 1
            let r = if x > 0.0 {
                (1.0 - s.frac_older) - sigmoid(-x)
            } else {
                sigmoid(x) - s.frac_older
            };
            r * r
        })
        .sum()
}

/// Least-squares fit of `σ(β Δ)` to empirical "older" frequencies, searching
/// `β ∈ [1e-3, 10]`.
pub fn fit_beta(samples: &[BetaSample]) -> Result<LogisticModel, FitError> {
    if let Some(index) = samples
        .iter()
        .position(|s| !s.frac_older.is_finite() || !(0.0..=1.0).contains(&s.frac_older))
    {
        return Err(FitError::InvalidFraction { index });
    }
    let first = samples.first().ok_or(FitError::TooFewSamples)?.age_diff;
    if samples.iter().all(|s| s.age_diff == first) {
        return Err(FitError::TooFewSamples);
    }
    if samples.iter().all(|s| s.frac_older == 0.5) {
        return Err(FitError::FitDiverged);
    }

    let objective = |b: f64| squared_error(samples, b);
    let (beta, _) = golden_section_minimize(objective, BETA_LOWER, BETA_UPPER, BETA_TOLERANCE);
    // the squared error has no finite minimizer if it is constant over the range
    let (lo, hi) = (objective(BETA_LOWER), objective(BETA_UPPER));
    if lo == hi && objective(beta) == lo {
        return Err(FitError::FitDiverged);
    }
    LogisticModel::new(beta).map_err(|_| FitError::FitDiverged)
}
