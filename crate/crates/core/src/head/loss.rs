//! Training losses for the head and their gradients with respect to the
//! classifier weights.

use alloc::vec;
use alloc::vec::Vec;

use super::{FeatureVector, HeadError, OrdinalHead};
use crate::distribution::AgeDistribution;
use crate::math::log_sum_exp;

/// Classifiers whose threshold lies within this many years of the label
/// cost nothing.
pub const COST_MARGIN: u32 = 3;

/// Loss value and its gradient, laid out like [`OrdinalHead::weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// `0` when `|a_gt − t| < 3`, otherwise `|a_gt − t|`.
pub fn truncated_cost(a_gt: u32, threshold: u32) -> f64 {
    let gap = a_gt.abs_diff(threshold);
    if gap < COST_MARGIN {
        0.0
    } else {
        gap as f64
    }
}

/// `−Σ_a p_gt(a) ln p(a)`. Infinite if `p` is zero where `p_gt` is not.
pub fn cross_entropy(p_gt: &AgeDistribution, p: &AgeDistribution) -> f64 {
    p_gt.mass()
        .iter()
        .zip(p.mass())
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &q)| -t * libm::log(q))
        .sum()
}

// Spreads dL/df_k back through the sigmoid onto row k.
fn backprop_rows(head: &OrdinalHead, x: &FeatureVector, f: &[f64], dl_df: &[f64]) -> Vec<f64> {
    let d = head.dim();
    let mut grad = vec![0.0; head.weights().len()];
    for (k, (&fk, &g)) in f.iter().zip(dl_df).enumerate() {
        let ds = g * fk * (1.0 - fk);
        let row = &mut grad[k * (d + 1)..(k + 1) * (d + 1)];
        for (r, &xv) in row.iter_mut().zip(x.as_slice()) {
            *r = ds * xv;
        }
        row[d] = ds;
    }
    grad
}

impl OrdinalHead {
    /// `Σ_k Cost_k(a_gt) (f_k − 1[a_gt > t_k])²` for given responses.
    pub fn cost_sensitive_of(&self, responses: &[f64], a_gt: u32) -> f64 {
        responses
            .iter()
            .enumerate()
            .map(|(k, &f)| {
                let t = self.threshold(k);
                let target = if a_gt > t { 1.0 } else { 0.0 };
                truncated_cost(a_gt, t) * (f - target) * (f - target)
            })
            .sum()
    }
}

/// Cost-sensitive ordinal loss on the sigmoid outputs.
pub fn loss_cost_sensitive(head: &OrdinalHead, x: &FeatureVector, a_gt: u32) -> Result<LossAndGradient, HeadError> {
    let grid = head.grid();
    if !grid.contains(a_gt) {
        return Err(HeadError::AgeOutOfGrid { age: a_gt, grid });
    }
    let f = head.forward_ordinal(x)?;
    let dl_df: Vec<f64> = f
        .iter()
        .enumerate()
        .map(|(k, &fk)| {
            let t = head.threshold(k);
            let target = if a_gt > t { 1.0 } else { 0.0 };
            2.0 * truncated_cost(a_gt, t) * (fk - target)
        })
        .collect();
    Ok(LossAndGradient {
        loss: head.cost_sensitive_of(&f, a_gt),
        grad: backprop_rows(head, x, &f, &dl_df),
    })
}

/// `−Σ_a P_gt(a) log P(a | x)`. The entropy of `P_gt` is not subtracted, so
/// the KL divergence is `loss − p_gt.entropy()`.
pub fn loss_kl(head: &OrdinalHead, x: &FeatureVector, p_gt: &AgeDistribution) -> Result<LossAndGradient, HeadError> {
    if p_gt.grid() != head.grid() {
        return Err(HeadError::GridMismatch {
            expected: head.grid(),
            found: p_gt.grid(),
        });
    }
    let f = head.forward_ordinal(x)?;
    let map = head.posterior_map();
    let logits = map.logits(&f);
    let lse = log_sum_exp(&logits);

    let mut loss = 0.0;
    // dL/dz_a = P(a) − P_gt(a), since P_gt sums to one
    let mut dl_dz = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(p_gt.mass()) {
        let log_p = z - lse;
        if t > 0.0 {
            loss -= t * log_p;
        }
        dl_dz.push(libm::exp(log_p) - t);
    }
    let dl_df: Vec<f64> = (0..head.ranks())
        .map(|k| dl_dz.iter().enumerate().map(|(a, &g)| g * map.weight(a, k)).sum())
        .collect();
    Ok(LossAndGradient {
        loss,
        grad: backprop_rows(head, x, &f, &dl_df),
    })
}
