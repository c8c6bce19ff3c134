//! How fast the posterior interval narrows as comparisons accumulate.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::annotator::{AnnotatorMode, SimulatedAnnotator};
use crate::comparison::{LogisticModel, ModelError};
use crate::distribution::{AgeDistribution, OUTLIER_LEVEL, OUTLIER_MAX_WIDTH};
use crate::grid::AgeGrid;
use crate::pipeline::selection::{
    select_references_with_fallback, synthetic_reference_pool, Gender, QueryItem, SelectionError, SelectionPolicy,
};
use crate::posterior::{posterior_from_events, PosteriorError};

pub const MIN_TRIALS: usize = 100;
const NARROW_WIDTH: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub grid: AgeGrid,
    /// Model used to compute posteriors.
    pub model: LogisticModel,
    /// Steepness of the simulated annotator.
    pub beta_true: f64,
    pub annotator_mode: AnnotatorMode,
    /// Only `rng_seed`, `gender_match_required` and `max_age_gap` are used;
    /// the below/above split comes from `comparisons`.
    pub policy: SelectionPolicy,
    pub trials: usize,
    pub comparisons: Vec<usize>,
    pub refs_per_age: usize,
    /// Standard deviation (years) of the rough age estimate around the truth.
    pub rough_age_noise: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: AgeGrid::DEFAULT,
            model: LogisticModel::default(),
            beta_true: crate::comparison::DEFAULT_BETA,
            annotator_mode: AnnotatorMode::Stochastic,
            policy: SelectionPolicy::default(),
            trials: 10_000,
            comparisons: vec![0, 1, 2, 4, 6, 8],
            refs_per_age: 4,
            rough_age_noise: 0.0,
            seed: 0,
        }
    }
}

/// Summary of the CI(0.90) widths over all trials with `m` comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub median_width: f64,
    pub p10_width: f64,
    pub p90_width: f64,
    pub frac_lt8: f64,
    pub frac_gt15: f64,
    pub discard_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("need at least {MIN_TRIALS} trials, got {0}")]
    TooFewTrials(usize),
    #[error("rough age noise must be finite and non-negative")]
    InvalidNoise,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[u32], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac
}

fn summarize(m: usize, mut widths: Vec<u32>) -> ExperimentRow {
    widths.sort_unstable();
    let n = widths.len() as f64;
    let frac = |pred: &dyn Fn(u32) -> bool| widths.iter().filter(|&&w| pred(w)).count() as f64 / n;
    let gt15 = frac(&|w| w > OUTLIER_MAX_WIDTH);
    ExperimentRow {
        m,
        median_width: quantile(&widths, 0.5),
        p10_width: quantile(&widths, 0.1),
        p90_width: quantile(&widths, 0.9),
        frac_lt8: frac(&|w| w < NARROW_WIDTH),
        frac_gt15: gt15,
        discard_rate: gt15,
    }
}

/// For every `M` in `config.comparisons`, runs `config.trials` independent
/// trials: draw a true age uniformly on the grid, bracket `⌊M/2⌋` references
/// below and `⌈M/2⌉` above a rough age estimate, simulate the answers and
/// record the width of the 90% interval.
///
/// Trial `t` of row `r` uses generator stream `(r << 32) | t`, so results do
/// not depend on evaluation order.
pub fn ci_narrowing_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>, ExperimentError> {
    if config.trials < MIN_TRIALS {
        return Err(ExperimentError::TooFewTrials(config.trials));
    }
    if !(config.rough_age_noise >= 0.0 && config.rough_age_noise.is_finite()) {
        return Err(ExperimentError::InvalidNoise);
    }
    let grid = config.grid;
    let prior = AgeDistribution::uniform(grid);
    let pool = synthetic_reference_pool(grid, config.refs_per_age);
    let annotator = SimulatedAnnotator::new(config.beta_true, config.annotator_mode, config.seed)?;
    let noise = rand_distr::Normal::new(0.0, config.rough_age_noise).expect("validated above");

    let mut rows = Vec::with_capacity(config.comparisons.len());
    for (r, &m) in config.comparisons.iter().enumerate() {
        if m == 0 {
            let w = prior.confidence_interval(OUTLIER_LEVEL).width();
            rows.push(summarize(0, vec![w; config.trials]));
            continue;
        }
        let policy = SelectionPolicy {
            num_below: m / 2,
            num_above: m - m / 2,
            adaptive: false,
            ..config.policy.clone()
        };
        let mut widths = Vec::with_capacity(config.trials);
        for t in 0..config.trials {
            let stream = ((r as u64) << 32) | t as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(stream);
            let true_age = rng.random_range(grid.min_age()..=grid.max_age());
            let gender = if rng.random::<bool>() {
                Gender::Female
            } else {
                Gender::Male
            };
            let offset = if config.rough_age_noise > 0.0 {
                libm::round(rand_distr::Distribution::sample(&noise, &mut rng)) as i64
            } else {
                0
            };
            let rough = grid.clamp(true_age as i64 + offset);
            let query = QueryItem {
                id: alloc::string::String::new(),
                image_uri: alloc::string::String::new(),
                gender,
                rough_age_hint: Some(rough),
            };
            let (refs, _) = select_references_with_fallback(&query, &pool, &policy, rough, &mut rng)?;
            let mut ann = annotator.clone().with_stream(stream);
            let events: Vec<_> = refs.iter().map(|x| ann.compare(true_age, x)).collect();
            let posterior = posterior_from_events(&config.model, &prior, &events)?;
            widths.push(posterior.confidence_interval(OUTLIER_LEVEL).width());
        }
        rows.push(summarize(m, widths));
    }
    Ok(rows)
}
