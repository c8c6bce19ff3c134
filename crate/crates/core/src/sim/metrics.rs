//! Point-estimate metrics: MAE, Adience group accuracy and CA(n).

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The eight Adience age groups as `(lo, hi)`; the last is open-ended.
pub const ADIENCE_GROUPS: [(u32, Option<u32>); 8] = [
    (0, Some(2)),
    (4, Some(6)),
    (8, Some(13)),
    (15, Some(20)),
    (25, Some(32)),
    (38, Some(43)),
    (48, Some(53)),
    (60, None),
];

pub const DEFAULT_CA_LEVELS: [u32; 3] = [3, 5, 7];

/// Counting rule for CA(n), repeated in every report.
pub const CA_RULE: &str = "CA(n) counts |pred - truth| <= n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ca_rule: String,
    pub n: usize,
    pub mae: f64,
    pub exact_group_acc: f64,
    pub one_off_acc: f64,
    pub ca: BTreeMap<u32, f64>,
    pub recall_pm3: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no predictions to evaluate")]
    Empty,
    #[error("{predictions} predictions but {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
}

fn distance_to_group(age: u32, (lo, hi): (u32, Option<u32>)) -> u32 {
    if age < lo {
        lo - age
    } else {
        hi.map_or(0, |h| age.saturating_sub(h))
    }
}

/// Index into [`ADIENCE_GROUPS`] of the nearest group; ties go to the
/// younger group.
pub fn adience_group(age: u32) -> usize {
    let mut best = 0;
    let mut best_d = u32::MAX;
    for (i, &g) in ADIENCE_GROUPS.iter().enumerate() {
        let d = distance_to_group(age, g);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn check(predictions: usize, truths: usize) -> Result<(), MetricError> {
    if predictions != truths {
        return Err(MetricError::LengthMismatch { predictions, truths });
    }
    if predictions == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn percent(hits: usize, n: usize) -> f64 {
    100.0 * hits as f64 / n as f64
}

/// `(exact, one_off)` accuracy in percent over group indices.
pub fn group_accuracy(pred_groups: &[usize], truth_groups: &[usize]) -> Result<(f64, f64), MetricError> {
    check(pred_groups.len(), truth_groups.len())?;
    let pairs = || pred_groups.iter().zip(truth_groups);
    let exact = pairs().filter(|(p, t)| p == t).count();
    let one_off = pairs().filter(|(p, t)| p.abs_diff(**t) <= 1).count();
    let n = pred_groups.len();
    Ok((percent(exact, n), percent(one_off, n)))
}

/// Percentage of predictions within `n` years of the truth.
pub fn cumulative_accuracy(predictions: &[u32], truths: &[u32], n: u32) -> Result<f64, MetricError> {
    check(predictions.len(), truths.len())?;
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.abs_diff(**t) <= n)
        .count();
    Ok(percent(hits, predictions.len()))
}

pub fn evaluate(predictions: &[u32], truths: &[u32], ca_levels: &[u32]) -> Result<MetricReport, MetricError> {
    check(predictions.len(), truths.len())?;
    let n = predictions.len();
    let mae = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| p.abs_diff(*t) as f64)
        .sum::<f64>()
        / n as f64;
    let pg: alloc::vec::Vec<usize> = predictions.iter().map(|&a| adience_group(a)).collect();
    let tg: alloc::vec::Vec<usize> = truths.iter().map(|&a| adience_group(a)).collect();
    let (exact_group_acc, one_off_acc) = group_accuracy(&pg, &tg)?;
    let mut ca = BTreeMap::new();
    for &level in ca_levels {
        ca.insert(level, cumulative_accuracy(predictions, truths, level)?);
    }
    Ok(MetricReport {
        ca_rule: CA_RULE.to_string(),
        n,
        mae,
        exact_group_acc,
        one_off_acc,
        ca,
        recall_pm3: cumulative_accuracy(predictions, truths, 3)?,
    })
}
