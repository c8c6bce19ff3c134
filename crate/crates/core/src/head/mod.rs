//! Ordinal-hyperplane head with a fixed posterior map.
//!
//! Classifier `k` answers "is this face older than `t_k`?" with
//! `f_k = σ(w_k · x + b_k)`, where the thresholds are `t_k = min_age + k`.
//! Treating the answers as independent soft events with logistic
//! likelihoods `P(E_k = 1 | a) = σ(β(a − t_k))`, the log posterior is linear
//! in `f`:
//!
//! ```text
//! log P(a | x) = Σ_k W[a][k] f_k + b[a] − log Z
//! W[a][k] = log σ(β(a − t_k)) − log σ(β(t_k − a))   (= β(a − t_k))
//! b[a]    = Σ_k log σ(β(t_k − a))
//! ```
//!
//! so the posterior is a fixed, untrained linear layer followed by softmax.

pub mod loss;
pub mod synth;
pub mod train;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::{LogisticModel, ModelError};
use crate::distribution::{AgeDistribution, DistributionError};
use crate::grid::AgeGrid;
use crate::math::{log_sigmoid, sigmoid};

pub use loss::{cross_entropy, loss_cost_sensitive, loss_kl, truncated_cost, LossAndGradient, COST_MARGIN};
pub use synth::{synth_dataset, SynthError, SyntheticGenerator, DEFAULT_FEATURE_DIM};
pub use train::{predict, train, EpochLoss, LossMode, Predictor, Sample, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeadError {
    #[error("feature vector has dimension {got}, head expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature {index} is not finite")]
    NonFiniteFeature { index: usize },
    #[error("weight matrix has {got} entries, expected {expected}")]
    WeightShape { expected: usize, got: usize },
    #[error("weight {index} is not finite")]
    NonFiniteWeight { index: usize },
    #[error("rank count {ranks} must be between 1 and {max} for grid {grid}")]
    InvalidRanks { ranks: usize, max: usize, grid: AgeGrid },
    #[error("age {age} is outside grid {grid}")]
    AgeOutOfGrid { age: u32, grid: AgeGrid },
    #[error("target distribution is on grid {found}, head uses {expected}")]
    GridMismatch { expected: AgeGrid, found: AgeGrid },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Input features for the head (a stand-in for a CNN embedding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, HeadError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(HeadError::NonFiniteFeature { index });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The fixed `|grid| × K` linear map and bias from classifier responses to
/// posterior logits.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMap {
    bins: usize,
    ranks: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl PosteriorMap {
    /// Builds the map from its definition in terms of log-likelihoods (not
    /// from the simplified `β(a − t_k)` form).
    pub fn new(grid: AgeGrid, ranks: usize, model: &LogisticModel) -> Self {
        let beta = model.beta();
        let bins = grid.len();
        let mut weight = Vec::with_capacity(bins * ranks);
        let mut bias = Vec::with_capacity(bins);
        for a in grid.ages() {
            let mut b = 0.0;
            for k in 0..ranks {
                let diff = a as f64 - (grid.min_age() as f64 + k as f64);
                let log_older = log_sigmoid(beta * diff);
                let log_younger = log_sigmoid(-beta * diff);
                weight.push(log_older - log_younger);
                b += log_younger;
            }
            bias.push(b);
        }
        Self {
            bins,
            ranks,
            weight,
            bias,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    /// `W[bin][rank]`.
    pub fn weight(&self, bin: usize, rank: usize) -> f64 {
        self.weight[bin * self.ranks + rank]
    }

    pub fn bias(&self, bin: usize) -> f64 {
        self.bias[bin]
    }

    /// `W f + b`, one logit per grid bin.
    pub fn logits(&self, responses: &[f64]) -> Vec<f64> {
        debug_assert_eq!(responses.len(), self.ranks);
        (0..self.bins)
            .map(|a| {
                let row = &self.weight[a * self.ranks..(a + 1) * self.ranks];
                row.iter().zip(responses).map(|(w, f)| w * f).sum::<f64>() + self.bias[a]
            })
            .collect()
    }
}

/// K ordinal binary classifiers plus the posterior map.
///
/// Weights are stored row-major, `K × (d + 1)`; the last column of each row is
/// the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalHead {
    grid: AgeGrid,
    dim: usize,
    ranks: usize,
    model: LogisticModel,
    weights: Vec<f64>,
    map: PosteriorMap,
}

/// JSON checkpoint layout: `{"K", "d", "beta", "grid", "weights": [[..], ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(rename = "K")]
    pub ranks: usize,
    pub d: usize,
    pub beta: f64,
    pub grid: AgeGrid,
    pub weights: Vec<Vec<f64>>,
}

impl OrdinalHead {
    /// Zero-initialized head with one classifier per grid gap (`K = |grid| − 1`).
    pub fn new(grid: AgeGrid, dim: usize, model: LogisticModel) -> Self {
        Self::with_ranks(grid, dim, grid.len() - 1, model).expect("grid.len() - 1 ranks always fit")
    }

    pub fn with_ranks(grid: AgeGrid, dim: usize, ranks: usize, model: LogisticModel) -> Result<Self, HeadError> {
        let weights = alloc::vec![0.0; ranks * (dim + 1)];
        Self::from_weights(grid, dim, ranks, model, weights)
    }

    pub fn from_weights(
        grid: AgeGrid,
        dim: usize,
        ranks: usize,
        model: LogisticModel,
        weights: Vec<f64>,
    ) -> Result<Self, HeadError> {
        let max = grid.len() - 1;
        if ranks == 0 || ranks > max {
            return Err(HeadError::InvalidRanks { ranks, max, grid });
        }
        let expected = ranks * (dim + 1);
        if weights.len() != expected {
            return Err(HeadError::WeightShape {
                expected,
                got: weights.len(),
            });
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(HeadError::NonFiniteWeight { index });
        }
        Ok(Self {
            grid,
            dim,
            ranks,
            model,
            weights,
            map: PosteriorMap::new(grid, ranks, &model),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, HeadError> {
        let model = LogisticModel::new(ck.beta)?;
        let expected = ck.ranks * (ck.d + 1);
        if ck.weights.len() != ck.ranks || ck.weights.iter().any(|r| r.len() != ck.d + 1) {
            let got = ck.weights.iter().map(Vec::len).sum();
            return Err(HeadError::WeightShape { expected, got });
        }
        let flat = ck.weights.iter().flatten().copied().collect();
        Self::from_weights(ck.grid, ck.d, ck.ranks, model, flat)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            ranks: self.ranks,
            d: self.dim,
            beta: self.model.beta(),
            grid: self.grid,
            weights: self.weights.chunks(self.dim + 1).map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn grid(&self) -> AgeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn model(&self) -> LogisticModel {
        self.model
    }

    pub fn posterior_map(&self) -> &PosteriorMap {
        &self.map
    }

    /// Age threshold of classifier `k`.
    pub fn threshold(&self, rank: usize) -> u32 {
        self.grid.min_age() + rank as u32
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row `k`: `d` feature weights followed by the bias.
    pub fn row(&self, rank: usize) -> &[f64] {
        let w = self.dim + 1;
        &self.weights[rank * w..(rank + 1) * w]
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn check_dim(&self, x: &FeatureVector) -> Result<(), HeadError> {
        if x.dim() != self.dim {
            return Err(HeadError::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Raw scores `w_k · x + b_k`.
    pub fn scores(&self, x: &FeatureVector) -> Result<Vec<f64>, HeadError> {
        self.check_dim(x)?;
        let xs = x.as_slice();
        Ok((0..self.ranks)
            .map(|k| {
                let row = self.row(k);
                row[..self.dim].iter().zip(xs).map(|(w, v)| w * v).sum::<f64>() + row[self.dim]
            })
            .collect())
    }

    /// `f_k = σ(w_k · x + b_k)` for every classifier.
    pub fn forward_ordinal(&self, x: &FeatureVector) -> Result<Vec<f64>, HeadError> {
        Ok(self.scores(x)?.into_iter().map(sigmoid).collect())
    }

    /// Softmax of the posterior map applied to `responses`.
    pub fn posterior_from_responses(&self, responses: &[f64]) -> Result<AgeDistribution, HeadError> {
        let logits = self.map.logits(responses);
        Ok(AgeDistribution::from_log_weights(self.grid, &logits)?)
    }

    pub fn forward_posterior(&self, x: &FeatureVector) -> Result<AgeDistribution, HeadError> {
        let f = self.forward_ordinal(x)?;
        self.posterior_from_responses(&f)
    }

    /// `min_age + #{k : f_k > 0.5}`.
    pub fn ohrank_from_responses(&self, responses: &[f64]) -> u32 {
        self.grid.min_age() + responses.iter().filter(|&&f| f > 0.5).count() as u32
    }

    pub fn predict_ohrank(&self, x: &FeatureVector) -> Result<u32, HeadError> {
        Ok(self.ohrank_from_responses(&self.forward_ordinal(x)?))
    }
}
