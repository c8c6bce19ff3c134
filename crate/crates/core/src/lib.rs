//! Comparison-based age posteriors and the ordinal-hyperplane posterior head.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Every numeric routine goes through `libm`, so results are
//! bit-identical across targets.
//!
//! Layout:
//!
//! * [`grid`], [`distribution`], [`comparison`], [`posterior`], [`fit`]:
//!   discrete-grid Bayesian machinery for pairwise "older / younger" judgments.
//! * [`pipeline`]: reference selection, ground-truth construction and
//!   finalization of annotation records.
//! * [`head`]: K ordinal binary classifiers, the fixed posterior map, the
//!   cost-sensitive and KL losses with analytic gradients, and a trainer.
//! * [`sim`]: simulated annotators, the CI-narrowing experiment and metrics.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

pub mod comparison;
pub mod distribution;
pub mod fit;
pub mod grid;
pub mod head;
pub mod math;
pub mod pipeline;
pub mod posterior;
pub mod sim;

pub use comparison::{comparison_likelihood, ComparisonEvent, LogisticModel, ModelError, Outcome};
pub use distribution::{AgeDistribution, CredibleInterval, DistributionError};
pub use fit::{fit_beta, golden_section_minimize, BetaSample, FitError};
pub use grid::{AgeGrid, GridError};
pub use posterior::{posterior_from_events, PosteriorError};
