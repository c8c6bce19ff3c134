//! Annotators whose answers follow the logistic comparison model.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::{ComparisonEvent, LogisticModel, ModelError, Outcome};
use crate::distribution::AgeDistribution;
use crate::grid::AgeGrid;
use crate::pipeline::record::{finalize_annotation, AnnotationRecord, FinalizeError};
use crate::pipeline::selection::{
    rough_age_estimate, select_references_with_fallback, AdaptiveSelector, QueryItem, ReferenceItem, SelectionError,
    SelectionPolicy,
};
use crate::posterior::{posterior_from_events, PosteriorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorMode {
    /// Answers "older" with probability `σ(β_true (true_age − ref_age))`.
    #[default]
    Stochastic,
    /// Always right; a fair coin when the ages are equal.
    Truthful,
}

#[derive(Debug, Clone)]
pub struct SimulatedAnnotator {
    id: String,
    model: LogisticModel,
    mode: AnnotatorMode,
    seed: u64,
    rng: ChaCha8Rng,
    clock: i64,
}

impl SimulatedAnnotator {
    pub fn new(beta_true: f64, mode: AnnotatorMode, seed: u64) -> Result<Self, ModelError> {
        Ok(Self {
            id: alloc::format!("sim-{seed}"),
            model: LogisticModel::new(beta_true)?,
            mode,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: 0,
        })
    }

    /// Same annotator on an independent generator stream.
    pub fn with_stream(mut self, stream: u64) -> Self {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.rng.set_stream(stream);
        self.clock = 0;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn beta_true(&self) -> f64 {
        self.model.beta()
    }

    pub fn mode(&self) -> AnnotatorMode {
        self.mode
    }

    fn answer(&mut self, true_age: u32, ref_age: u32) -> Outcome {
        let older = match self.mode {
            AnnotatorMode::Stochastic => {
                let p = self.model.prob_older(true_age as f64 - ref_age as f64);
                self.rng.random::<f64>() < p
            }
            AnnotatorMode::Truthful if true_age == ref_age => self.rng.random::<bool>(),
            AnnotatorMode::Truthful => true_age > ref_age,
        };
        Outcome::from_older(older)
    }

    fn tick(&mut self) -> i64 {
        self.clock += 1;
        self.clock
    }

    /// One simulated judgment against a reference of age `ref_age`. The event
    /// has an empty `ref_id`; use [`Self::compare`] when the reference is known.
    pub fn simulate_comparison(&mut self, true_age: u32, ref_age: u32) -> ComparisonEvent {
        let outcome = self.answer(true_age, ref_age);
        let ts = self.tick();
        ComparisonEvent::new(String::new(), ref_age, outcome, self.id.clone(), ts)
    }

    pub fn compare(&mut self, true_age: u32, reference: &ReferenceItem) -> ComparisonEvent {
        let outcome = self.answer(true_age, reference.age);
        let ts = self.tick();
        ComparisonEvent::new(reference.id.clone(), reference.age, outcome, self.id.clone(), ts)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Finalize(#[from] FinalizeError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
}

/// Runs the whole labelling protocol for one query with a simulated
/// annotator whose hidden answer is `true_age`.
///
/// With `policy.adaptive` unset, all references are drawn up front around the
/// query's rough age (grid midpoint if it has no hint). Otherwise they are
/// drawn one at a time around the running posterior mode.
#[allow(clippy::too_many_arguments)]
pub fn label_query(
    query: &QueryItem,
    true_age: u32,
    pool: &[ReferenceItem],
    policy: &SelectionPolicy,
    annotator: &mut SimulatedAnnotator,
    model: &LogisticModel,
    prior: &AgeDistribution,
    stream: u64,
) -> Result<AnnotationRecord, LabelError> {
    let grid: AgeGrid = prior.grid();
    let mut rng = policy.rng(stream);
    let events: Vec<ComparisonEvent> = if policy.adaptive {
        let mut selector = AdaptiveSelector::new(policy.clone())?;
        let mut events = Vec::with_capacity(policy.total());
        let mut posterior = prior.clone();
        while let Some(reference) = selector.next(query, pool, &posterior, &mut rng)? {
            events.push(annotator.compare(true_age, &reference));
            posterior = posterior_from_events(model, prior, &events)?;
        }
        events
    } else {
        let rough = rough_age_estimate(query, grid.midpoint());
        let (refs, _) = select_references_with_fallback(query, pool, policy, rough, &mut rng)?;
        refs.iter().map(|r| annotator.compare(true_age, r)).collect()
    };
    Ok(finalize_annotation(query.id.clone(), events, model, prior)?)
}
