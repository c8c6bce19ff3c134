//! Mini-batch gradient descent on the head.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::{loss_cost_sensitive, loss_kl};
use super::{FeatureVector, HeadError, OrdinalHead};
use crate::distribution::AgeDistribution;
use crate::pipeline::ground_truth::{build_gt_posterior, GroundTruthError, GroundTruthSpec};

/// Which losses drive the update. Both are weighted 1 when combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    HyperOnly,
    KlOnly,
    #[default]
    Both,
}

impl LossMode {
    /// `(λ_hyper, λ_kl)`.
    pub fn weights(self) -> (f64, f64) {
        match self {
            LossMode::HyperOnly => (1.0, 0.0),
            LossMode::KlOnly => (0.0, 1.0),
            LossMode::Both => (1.0, 1.0),
        }
    }

    /// Hyper-only heads are read out by counting thresholds; anything trained
    /// with the KL term by the posterior mode.
    pub fn default_predictor(self) -> Predictor {
        match self {
            LossMode::HyperOnly => Predictor::Ohrank,
            _ => Predictor::PosteriorMode,
        }
    }
}

/// How a point age is read off the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predictor {
    Ohrank,
    PosteriorMode,
}

pub fn predict(head: &OrdinalHead, x: &FeatureVector, predictor: Predictor) -> Result<u32, HeadError> {
    match predictor {
        Predictor::Ohrank => head.predict_ohrank(x),
        Predictor::PosteriorMode => Ok(head.forward_posterior(x)?.mode()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: FeatureVector,
    pub gt: GroundTruthSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 32,
            mode: LossMode::Both,
            seed: 0,
        }
    }
}

/// Mean per-sample losses over one epoch, measured before each batch's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_hyper: f64,
    pub loss_kl: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: OrdinalHead,
    pub trace: Vec<EpochLoss>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("loss became non-finite in batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error("sample {index}: {source}")]
    GroundTruth { index: usize, source: GroundTruthError },
    #[error(transparent)]
    Head(#[from] HeadError),
}

struct Prepared<'a> {
    features: &'a FeatureVector,
    point_age: u32,
    target: AgeDistribution,
}

/// Minimizes `λ_h L_hyper + λ_kl L_KL` by mini-batch gradient descent with a
/// fixed learning rate. Deterministic for a given `config.seed`.
pub fn train(mut head: OrdinalHead, dataset: &[Sample], config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(TrainError::InvalidConfig(
            "learning rate must be a finite non-negative number",
        ));
    }
    if config.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch size must be at least 1"));
    }

    let grid = head.grid();
    let prepared = dataset
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let target = build_gt_posterior(&s.gt, grid).map_err(|source| TrainError::GroundTruth { index, source })?;
            let point_age =
                s.gt.point_age(grid)
                    .map_err(|source| TrainError::GroundTruth { index, source })?;
            Ok(Prepared {
                features: &s.features,
                point_age,
                target,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;

    let (lambda_h, lambda_kl) = config.mode.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut per_sample_h = vec![0.0; prepared.len()];
    let mut per_sample_kl = vec![0.0; prepared.len()];
    let mut grad = vec![0.0; head.weights().len()];
    let mut trace = Vec::with_capacity(config.epochs);
    let mut batch_index = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_total = 0.0;
            for &i in batch {
                let s = &prepared[i];
                let h = loss_cost_sensitive(&head, s.features, s.point_age)?;
                let kl = loss_kl(&head, s.features, &s.target)?;
                per_sample_h[i] = h.loss;
                per_sample_kl[i] = kl.loss;
                batch_total += lambda_h * h.loss + lambda_kl * kl.loss;
                for ((g, gh), gk) in grad.iter_mut().zip(&h.grad).zip(&kl.grad) {
                    *g += lambda_h * gh + lambda_kl * gk;
                }
            }
            if !batch_total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteLoss { batch: batch_index });
            }
            let step = config.learning_rate / batch.len() as f64;
            for (w, g) in head.weights_mut().iter_mut().zip(&grad) {
                *w -= step * g;
            }
            batch_index += 1;
        }
        let n = prepared.len() as f64;
        let loss_hyper = per_sample_h.iter().sum::<f64>() / n;
        let loss_kl = per_sample_kl.iter().sum::<f64>() / n;
        trace.push(EpochLoss {
            epoch,
            loss_hyper,
            loss_kl,
            loss_total: lambda_h * loss_hyper + lambda_kl * loss_kl,
        });
    }
    Ok(TrainOutcome { head, trace })
}
