//! Normalized probability mass over an [`AgeGrid`].

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{AgeGrid, GridError};

/// Allowed deviation of `Σ mass` from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Credible level used by the outlier rule.
pub const OUTLIER_LEVEL: f64 = 0.90;

/// Posteriors whose 90% interval is wider than this many years are outliers.
pub const OUTLIER_MAX_WIDTH: u32 = 15;

// Window sums are built from prefix sums; allow for their round-off when
// comparing against the requested level.
const LEVEL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("mass has {got} entries but the grid has {expected} bins")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mass at bin {index} is negative")]
    NegativeMass { index: usize },
    #[error("mass at bin {index} is not finite")]
    NonFinite { index: usize },
    #[error("mass sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("distribution has no mass")]
    ZeroMass,
    #[error("age {age} is outside grid {grid}")]
    AgeOutOfGrid { age: u32, grid: AgeGrid },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Contiguous interval `[lo, hi]` of grid ages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(u32, u32)", into = "(u32, u32)")]
pub struct CredibleInterval {
    pub lo: u32,
    pub hi: u32,
}

impl CredibleInterval {
    /// `hi - lo` in years.
    pub fn width(&self) -> u32 {
        self.hi - self.lo
    }

    pub fn contains(&self, age: u32) -> bool {
        (self.lo..=self.hi).contains(&age)
    }
}

impl From<(u32, u32)> for CredibleInterval {
    fn from((lo, hi): (u32, u32)) -> Self {
        Self { lo, hi }
    }
}

impl From<CredibleInterval> for (u32, u32) {
    fn from(ci: CredibleInterval) -> Self {
        (ci.lo, ci.hi)
    }
}

/// Probability of each integer age on a grid.
///
/// Serialized as `{"min_age": .., "max_age": .., "mass": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct AgeDistribution {
    grid: AgeGrid,
    mass: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    min_age: u32,
    max_age: u32,
    mass: Vec<f64>,
}

impl TryFrom<DistributionRepr> for AgeDistribution {
    type Error = DistributionError;

    fn try_from(repr: DistributionRepr) -> Result<Self, Self::Error> {
        AgeDistribution::new(AgeGrid::new(repr.min_age, repr.max_age)?, repr.mass)
    }
}

impl From<AgeDistribution> for DistributionRepr {
    fn from(dist: AgeDistribution) -> Self {
        DistributionRepr {
            min_age: dist.grid.min_age(),
            max_age: dist.grid.max_age(),
            mass: dist.mass,
        }
    }
}

fn check_entries(grid: &AgeGrid, values: &[f64]) -> Result<(), DistributionError> {
    if values.len() != grid.len() {
        return Err(DistributionError::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    for (index, &m) in values.iter().enumerate() {
        if !m.is_finite() {
            return Err(DistributionError::NonFinite { index });
        }
        if m < 0.0 {
            return Err(DistributionError::NegativeMass { index });
        }
    }
    Ok(())
}

impl AgeDistribution {
    /// Wraps an already-normalized mass vector.
    pub fn new(grid: AgeGrid, mass: Vec<f64>) -> Result<Self, DistributionError> {
        check_entries(&grid, &mass)?;
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(DistributionError::NotNormalized { sum });
        }
        Ok(Self { grid, mass })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(grid: AgeGrid, mut weights: Vec<f64>) -> Result<Self, DistributionError> {
        check_entries(&grid, &weights)?;
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(DistributionError::ZeroMass);
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self { grid, mass: weights })
    }

    /// Exponentiates log-weights after subtracting their maximum, then
    /// normalizes. `-inf` entries get zero mass.
    pub fn from_log_weights(grid: AgeGrid, log_weights: &[f64]) -> Result<Self, DistributionError> {
        if log_weights.len() != grid.len() {
            return Err(DistributionError::LengthMismatch {
                expected: grid.len(),
                got: log_weights.len(),
            });
        }
        if let Some(index) = log_weights.iter().position(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(DistributionError::NonFinite { index });
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(DistributionError::ZeroMass);
        }
        let weights = log_weights.iter().map(|&w| libm::exp(w - max)).collect();
        Self::from_weights(grid, weights)
    }

    pub fn uniform(grid: AgeGrid) -> Self {
        let p = 1.0 / grid.len() as f64;
        Self {
            grid,
            mass: alloc::vec![p; grid.len()],
        }
    }

    pub fn point_mass(grid: AgeGrid, age: u32) -> Result<Self, DistributionError> {
        let index = grid
            .index_of(age)
            .ok_or(DistributionError::AgeOutOfGrid { age, grid })?;
        let mut mass = alloc::vec![0.0; grid.len()];
        mass[index] = 1.0;
        Ok(Self { grid, mass })
    }

    pub fn grid(&self) -> AgeGrid {
        self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_mass(self) -> Vec<f64> {
        self.mass
    }

    /// Mass at `age`, zero off-grid.
    pub fn prob(&self, age: u32) -> f64 {
        self.grid.index_of(age).map_or(0.0, |i| self.mass[i])
    }

    /// `(age, mass)` pairs in grid order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.grid.ages().zip(self.mass.iter().copied())
    }

    /// Most probable age; ties go to the youngest.
    pub fn mode(&self) -> u32 {
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        self.grid.age_at(best)
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(a, m)| a as f64 * m).sum()
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .mass
            .iter()
            .filter(|&&m| m > 0.0)
            .map(|&m| m * libm::log(m))
            .sum::<f64>()
    }

    /// Shortest contiguous window holding at least `level` of the mass.
    /// Among windows of that width the heavier one wins, then the younger.
    ///
    /// Panics unless `0 < level < 1`.
    pub fn confidence_interval(&self, level: f64) -> CredibleInterval {
        assert!(
            level > 0.0 && level < 1.0,
            "credible level must lie in (0, 1), got {level}"
        );
        let n = self.mass.len();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &m in &self.mass {
            acc += m;
            prefix.push(acc);
        }
        for span in 1..=n {
            let mut best_start = 0;
            let mut best_mass = f64::NEG_INFINITY;
            for start in 0..=n - span {
                let window = prefix[start + span] - prefix[start];
                if window > best_mass {
                    best_mass = window;
                    best_start = start;
                }
            }
            if best_mass >= level - LEVEL_SLACK {
                return CredibleInterval {
                    lo: self.grid.age_at(best_start),
                    hi: self.grid.age_at(best_start + span - 1),
                };
            }
        }
        CredibleInterval {
            lo: self.grid.min_age(),
            hi: self.grid.max_age(),
        }
    }

    /// True when the 90% interval is wider than 15 years.
    pub fn is_outlier(&self) -> bool {
        self.confidence_interval(OUTLIER_LEVEL).width() > OUTLIER_MAX_WIDTH
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> AgeGrid {
        // bins 20..=22 stand in for the ages {20, 30, 40} in mode examples
        AgeGrid::new(20, 22).unwrap()
    }

    /// O(n^3) scan over every window, summing each directly.
    fn brute_force_width(d: &AgeDistribution, level: f64) -> u32 {
        let n = d.mass().len();
        for span in 1..=n {
            for start in 0..=n - span {
                let s: f64 = d.mass()[start..start + span].iter().sum();
                if s >= level - 1e-12 {
                    return (span - 1) as u32;
                }
            }
        }
        unreachable!()
    }

    fn gaussian(grid: AgeGrid, mu: f64, sigma: f64) -> AgeDistribution {
        let w = grid
            .ages()
            .map(|a| libm::exp(-(a as f64 - mu).powi(2) / (2.0 * sigma * sigma)))
            .collect();
        AgeDistribution::from_weights(grid, w).unwrap()
    }

    #[test]
    fn validation_errors() {
        let g = grid3();
        assert!(matches!(
            AgeDistribution::new(g, alloc::vec![0.5, 0.5]),
            Err(DistributionError::LengthMismatch { .. })
        ));
        assert!(matches!(
            AgeDistribution::new(g, alloc::vec![-0.1, 0.6, 0.5]),
            Err(DistributionError::NegativeMass { index: 0 })
        ));
        assert!(matches!(
            AgeDistribution::new(g, alloc::vec![0.2, 0.2, 0.2]),
            Err(DistributionError::NotNormalized { .. })
        ));
        assert!(matches!(
            AgeDistribution::from_weights(g, alloc::vec![0.0, 0.0, 0.0]),
            Err(DistributionError::ZeroMass)
        ));
        assert!(matches!(
            AgeDistribution::from_log_weights(g, &[f64::NEG_INFINITY; 3]),
            Err(DistributionError::ZeroMass)
        ));
    }

    #[test]
    fn mode_examples() {
        let g = grid3();
        let d = AgeDistribution::new(g, alloc::vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(d.mode(), 21);
        assert_eq!(AgeDistribution::uniform(g).mode(), 20, "tie goes to youngest");
    }

    #[test]
    fn ci_point_mass_has_zero_width() {
        let d = AgeDistribution::point_mass(AgeGrid::DEFAULT, 30).unwrap();
        let ci = d.confidence_interval(0.9);
        assert_eq!((ci.lo, ci.hi, ci.width()), (30, 30, 0));
        assert!(!d.is_outlier());
    }

    #[test]
    fn ci_uniform_needs_64_bins() {
        let d = AgeDistribution::uniform(AgeGrid::DEFAULT);
        let ci = d.confidence_interval(0.9);
        assert_eq!(ci.width(), 63);
        assert_eq!(ci.lo, 0, "equal windows resolve toward the young end");
        assert_eq!(brute_force_width(&d, 0.9), 63);
        assert!(d.is_outlier());
    }

    #[test]
    fn ci_discretized_gaussian() {
        let d = gaussian(AgeGrid::DEFAULT, 30.0, 2.0);
        let ci = d.confidence_interval(0.9);
        assert_eq!(ci.width(), brute_force_width(&d, 0.9));
        assert!(ci.width() <= 8);
        assert!(ci.contains(30));
    }

    #[test]
    fn ci_matches_brute_force_on_irregular_shapes() {
        let g = AgeGrid::new(0, 30).unwrap();
        // bimodal, like a disagreement outlier
        let w: Vec<f64> = g
            .ages()
            .map(|a| {
                let a = a as f64;
                libm::exp(-(a - 5.0).powi(2) / 4.0) + 0.8 * libm::exp(-(a - 24.0).powi(2) / 2.0)
            })
            .collect();
        let d = AgeDistribution::from_weights(g, w).unwrap();
        for level in [0.3, 0.5, 0.8, 0.9, 0.99] {
            assert_eq!(d.confidence_interval(level).width(), brute_force_width(&d, level));
        }
    }

    #[test]
    fn json_shape() {
        let g = grid3();
        let d = AgeDistribution::new(g, alloc::vec![0.25, 0.5, 0.25]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"min_age":20,"max_age":22,"mass":[0.25,0.5,0.25]}"#);
        let back: AgeDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(
            serde_json::from_str::<AgeDistribution>(r#"{"min_age":20,"max_age":22,"mass":[0.5,0.5,0.5]}"#).is_err()
        );
    }

    #[test]
    fn entropy_of_uniform() {
        let d = AgeDistribution::uniform(AgeGrid::DEFAULT);
        assert!((d.entropy() - libm::log(71.0)).abs() < 1e-12);
        assert_eq!(AgeDistribution::point_mass(AgeGrid::DEFAULT, 3).unwrap().entropy(), 0.0);
    }
}
