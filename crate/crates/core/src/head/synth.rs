//! Synthetic feature/label pairs for exercising the head without images.
//!
//! Each age is mapped to `u(a) = (a / max, sin(π a / max), cos(π a / max))`,
//! lifted into `d` dimensions by a fixed Gaussian matrix, and perturbed with
//! small isotropic noise.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use super::train::Sample;
use super::FeatureVector;
use crate::grid::AgeGrid;
use crate::pipeline::ground_truth::GroundTruthSpec;

pub const DEFAULT_FEATURE_DIM: usize = 16;
const NOISE_SD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("sample count must be positive")]
    EmptyDataset,
    #[error("feature dimension must be positive")]
    ZeroDimension,
}

#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    grid: AgeGrid,
    dim: usize,
    // dim × 3, row-major
    embedding: Vec<f64>,
    seed: u64,
}

impl SyntheticGenerator {
    pub fn new(seed: u64, grid: AgeGrid, dim: usize) -> Result<Self, SynthError> {
        if dim == 0 {
            return Err(SynthError::ZeroDimension);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let embedding = (0..dim * 3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(Self {
            grid,
            dim,
            embedding,
            seed,
        })
    }

    pub fn grid(&self) -> AgeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Noise-free features for `age`.
    pub fn embed(&self, age: u32) -> Vec<f64> {
        let max = self.grid.max_age().max(1) as f64;
        let r = age as f64 / max;
        let angle = core::f64::consts::PI * r;
        let u = [r, libm::sin(angle), libm::cos(angle)];
        self.embedding
            .chunks(3)
            .map(|row| row.iter().zip(&u).map(|(m, v)| m * v).sum())
            .collect()
    }

    /// `n` samples with ages uniform on the grid. Different `stream`s give
    /// independent draws from the same embedding.
    pub fn sample(&self, n: usize, stream: u64) -> Result<Vec<Sample>, SynthError> {
        if n == 0 {
            return Err(SynthError::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.wrapping_add(1));
        let noise = Normal::new(0.0, NOISE_SD).expect("positive sd");
        Ok((0..n)
            .map(|_| {
                let age = rng.random_range(self.grid.min_age()..=self.grid.max_age());
                let values = self
                    .embed(age)
                    .into_iter()
                    .map(|v| v + noise.sample(&mut rng))
                    .collect();
                Sample {
                    features: FeatureVector::new(values).expect("finite by construction"),
                    gt: GroundTruthSpec::ExactAge { age },
                }
            })
            .collect())
    }
}

/// `n` samples from a fresh generator; shorthand for `new(seed, ..).sample(n, 0)`.
pub fn synth_dataset(n: usize, seed: u64, grid: AgeGrid, dim: usize) -> Result<Vec<Sample>, SynthError> {
    SyntheticGenerator::new(seed, grid, dim)?.sample(n, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn age_of(s: &Sample) -> u32 {
        match s.gt {
            GroundTruthSpec::ExactAge { age } => age,
            _ => unreachable!(),
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_dataset(50, 3, AgeGrid::DEFAULT, 8).unwrap();
        let b = synth_dataset(50, 3, AgeGrid::DEFAULT, 8).unwrap();
        let c = synth_dataset(50, 4, AgeGrid::DEFAULT, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|s| s.features.dim() == 8));
    }

    #[test]
    fn streams_share_embedding() {
        let g = SyntheticGenerator::new(9, AgeGrid::DEFAULT, 4).unwrap();
        let train = g.sample(20, 0).unwrap();
        let test = g.sample(20, 1).unwrap();
        assert_ne!(train, test);
        for s in train.iter().chain(&test) {
            let clean = g.embed(age_of(s));
            for (x, c) in s.features.as_slice().iter().zip(&clean) {
                assert!((x - c).abs() < 6.0 * NOISE_SD);
            }
        }
    }

    #[test]
    fn ages_are_uniform() {
        let n = 10_000;
        let data = synth_dataset(n, 0, AgeGrid::DEFAULT, 2).unwrap();
        let mut counts = vec![0usize; 71];
        for s in &data {
            counts[age_of(s) as usize] += 1;
        }
        // Pearson χ² over all 71 bins has mean 70 and sd √140 under uniformity
        let expected = n as f64 / 71.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let bound = 70.0 + 3.0 * libm::sqrt(140.0);
        assert!(chi2 <= bound, "χ² = {chi2}, bound {bound}");
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn errors() {
        assert_eq!(
            synth_dataset(0, 0, AgeGrid::DEFAULT, 2).unwrap_err(),
            SynthError::EmptyDataset
        );
        assert_eq!(
            synth_dataset(1, 0, AgeGrid::DEFAULT, 0).unwrap_err(),
            SynthError::ZeroDimension
        );
    }
}
