//! Pairwise comparison events and the logistic annotator response model.

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{log_sigmoid, sigmoid};

/// Steepness fitted to human comparison accuracy, per year of age difference.
pub const DEFAULT_BETA: f64 = 0.36;

/// Answer to "is the query older than the reference?".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Older,
    Younger,
}

impl Outcome {
    pub fn is_older(self) -> bool {
        matches!(self, Outcome::Older)
    }

    pub fn from_older(older: bool) -> Self {
        if older {
            Outcome::Older
        } else {
            Outcome::Younger
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Older => "older",
            Outcome::Younger => "younger",
        }
    }
}

/// One judgment of the query against a reference of known age.
///
/// `timestamp` is milliseconds since the Unix epoch, or a logical clock for
/// simulated annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonEvent {
    pub ref_id: String,
    pub ref_age: u32,
    pub outcome: Outcome,
    pub annotator_id: String,
    pub timestamp: i64,
}

impl ComparisonEvent {
    pub fn new(
        ref_id: impl Into<String>,
        ref_age: u32,
        outcome: Outcome,
        annotator_id: impl Into<String>,
        timestamp: i64,
    ) -> Self {
        Self {
            ref_id: ref_id.into(),
            ref_age,
            outcome,
            annotator_id: annotator_id.into(),
            timestamp,
        }
    }

    /// Event with no provenance, for computations that only need the judgment.
    pub fn bare(ref_age: u32, outcome: Outcome) -> Self {
        Self::new(String::new(), ref_age, outcome, String::new(), 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ModelError {
    #[error("logistic steepness must be positive and finite, got {0}")]
    InvalidBeta(f64),
}

/// `P(older | age a, reference k) = σ(β (a − k))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct LogisticModel {
    beta: f64,
}

#[derive(Deserialize)]
struct RawModel {
    beta: f64,
}

impl TryFrom<RawModel> for LogisticModel {
    type Error = ModelError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        LogisticModel::new(raw.beta)
    }
}

impl Default for LogisticModel {
    fn default() -> Self {
        Self { beta: DEFAULT_BETA }
    }
}

impl LogisticModel {
    pub fn new(beta: f64) -> Result<Self, ModelError> {
        if beta > 0.0 && beta.is_finite() {
            Ok(Self { beta })
        } else {
            Err(ModelError::InvalidBeta(beta))
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Probability that an annotator answers "older" for an age gap of
    /// `age_diff = a − k` years.
    pub fn prob_older(&self, age_diff: f64) -> f64 {
        sigmoid(self.beta * age_diff)
    }

    /// `P(outcome | a)` for a comparison against a reference aged `ref_age`.
    ///
    /// The partition term `Z = σ(β(a−k)) + σ(β(k−a))` is evaluated explicitly
    /// even though it equals one.
    pub fn likelihood(&self, ref_age: u32, outcome: Outcome, age: u32) -> f64 {
        let x = self.beta * (age as f64 - ref_age as f64);
        let older = sigmoid(x);
        let younger = sigmoid(-x);
        let z = older + younger;
        match outcome {
            Outcome::Older => older / z,
            Outcome::Younger => younger / z,
        }
    }

    /// `ln P(outcome | a)`, accurate far into the tails.
    pub fn log_likelihood(&self, ref_age: u32, outcome: Outcome, age: u32) -> f64 {
        let x = self.beta * (age as f64 - ref_age as f64);
        let log_z = libm::log(sigmoid(x) + sigmoid(-x));
        let log_p = match outcome {
            Outcome::Older => log_sigmoid(x),
            Outcome::Younger => log_sigmoid(-x),
        };
        log_p - log_z
    }
}

/// Likelihood of `event` given the query's true age is `age`.
pub fn comparison_likelihood(model: &LogisticModel, event: &ComparisonEvent, age: u32) -> f64 {
    model.likelihood(event.ref_age, event.outcome, age)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchor_values() {
        let m = LogisticModel::default();
        let older = |a| comparison_likelihood(&m, &ComparisonEvent::bare(30, Outcome::Older), a);
        // σ(1.8) and σ(3.6)
        assert!((older(35) - 0.858_148_935_099_512_3).abs() < 1e-12);
        assert!((older(40) - 0.973_403_006_423_134_6).abs() < 1e-12);
        assert!((older(35) - 0.8581).abs() < 5e-4);
        assert!((older(40) - 0.9734).abs() < 5e-4);
        assert_eq!(older(30), 0.5);
    }

    #[test]
    fn invalid_beta() {
        assert!(LogisticModel::new(0.0).is_err());
        assert!(LogisticModel::new(-1.0).is_err());
        assert!(LogisticModel::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<LogisticModel>(r#"{"beta":-2}"#).is_err());
    }

    #[test]
    fn outcome_json() {
        assert_eq!(serde_json::to_string(&Outcome::Older).unwrap(), r#""older""#);
        assert_eq!(
            serde_json::from_str::<Outcome>(r#""younger""#).unwrap(),
            Outcome::Younger
        );
    }

    proptest! {
        #[test]
        fn partition_is_trivial(beta in 0.01f64..5.0, k in 0u32..=70, a in 0u32..=70) {
            let m = LogisticModel::new(beta).unwrap();
            let s = m.likelihood(k, Outcome::Older, a) + m.likelihood(k, Outcome::Younger, a);
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_age(beta in 0.01f64..2.0, k in 0u32..=70, a in 0u32..70) {
            // strict monotonicity holds until σ saturates at 1 in f64
            let m = LogisticModel::new(beta).unwrap();
            let lo = m.likelihood(k, Outcome::Older, a);
            let hi = m.likelihood(k, Outcome::Older, a + 1);
            prop_assert!(hi > lo || hi == 1.0);
            let lo_y = m.likelihood(k, Outcome::Younger, a);
            let hi_y = m.likelihood(k, Outcome::Younger, a + 1);
            prop_assert!(hi_y < lo_y || lo_y == 1.0 || hi_y == 0.0);
        }

        #[test]
        fn log_likelihood_consistent(beta in 0.01f64..2.0, k in 0u32..=70, a in 0u32..=70) {
            let m = LogisticModel::new(beta).unwrap();
            for o in [Outcome::Older, Outcome::Younger] {
                let direct = libm::log(m.likelihood(k, o, a));
                prop_assert!((m.log_likelihood(k, o, a) - direct).abs() < 1e-9);
            }
        }
    }
}
