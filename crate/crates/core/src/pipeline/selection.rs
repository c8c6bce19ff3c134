//! Choosing which reference faces a query is compared against.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::AgeDistribution;
use crate::grid::AgeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

/// A face of known age from the reference database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceItem {
    pub id: String,
    pub image_uri: String,
    pub age: u32,
    pub gender: Gender,
}

/// A face of unknown age to be labelled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryItem {
    pub id: String,
    pub image_uri: String,
    #[serde(default)]
    pub gender: Gender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rough_age_hint: Option<u32>,
}

/// How many references to draw on each side of the rough age estimate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionPolicy {
    pub num_below: usize,
    pub num_above: usize,
    pub gender_match_required: bool,
    pub rng_seed: u64,
    /// Only references within this many years of the rough age are eligible.
    /// `None` draws from the whole stratum.
    pub max_age_gap: Option<u32>,
    /// Re-bracket around the running posterior mode after every answer
    /// instead of drawing all references up front.
    pub adaptive: bool,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            num_below: 3,
            num_above: 3,
            gender_match_required: true,
            rng_seed: 0,
            max_age_gap: Some(10),
            adaptive: false,
        }
    }
}

impl SelectionPolicy {
    pub fn total(&self) -> usize {
        self.num_below + self.num_above
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.total() == 0 {
            Err(SelectionError::EmptyPolicy)
        } else {
            Ok(())
        }
    }

    /// Generator seeded from `rng_seed`, on an independent stream per `stream`.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Below,
    Above,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::Below => "below",
            Stratum::Above => "above",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("selection policy asks for zero references")]
    EmptyPolicy,
    #[error(
        "insufficient reference pool: stratum {stratum} of rough age {rough_age} needs {needed} \
         references but only {available} are eligible (relax gender matching or widen the strata)"
    )]
    InsufficientPool {
        stratum: Stratum,
        rough_age: u32,
        needed: usize,
        available: usize,
    },
}

/// Which constraints had to be loosened to fill both strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    None,
    GenderRelaxed,
    StrataWidened,
}

fn gender_ok(query: &QueryItem, item: &ReferenceItem, required: bool) -> bool {
    !required || query.gender == Gender::Unknown || item.gender == query.gender
}

fn within_gap(age: u32, rough_age: u32, gap: Option<u32>) -> bool {
    gap.is_none_or(|g| age.abs_diff(rough_age) <= g)
}

fn eligible(
    query: &QueryItem,
    item: &ReferenceItem,
    policy: &SelectionPolicy,
    gender_required: bool,
    rough_age: u32,
) -> bool {
    gender_ok(query, item, gender_required) && within_gap(item.age, rough_age, policy.max_age_gap)
}

fn draw<R: Rng + ?Sized>(
    rng: &mut R,
    candidates: &[usize],
    amount: usize,
    stratum: Stratum,
    rough_age: u32,
) -> Result<Vec<usize>, SelectionError> {
    if candidates.len() < amount {
        return Err(SelectionError::InsufficientPool {
            stratum,
            rough_age,
            needed: amount,
            available: candidates.len(),
        });
    }
    Ok(index::sample(rng, candidates.len(), amount)
        .into_iter()
        .map(|i| candidates[i])
        .collect())
}

fn select_inner<R: Rng + ?Sized>(
    query: &QueryItem,
    pool: &[ReferenceItem],
    policy: &SelectionPolicy,
    rough_age: u32,
    rng: &mut R,
    gender_required: bool,
    widened: bool,
) -> Result<Vec<ReferenceItem>, SelectionError> {
    policy.validate()?;
    let below: Vec<usize> = pool
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            (r.age < rough_age || (widened && r.age == rough_age))
                && eligible(query, r, policy, gender_required, rough_age)
        })
        .map(|(i, _)| i)
        .collect();
    let below_pick = draw(rng, &below, policy.num_below, Stratum::Below, rough_age)?;
    let taken: BTreeSet<usize> = below_pick.iter().copied().collect();
    let above: Vec<usize> = pool
        .iter()
        .enumerate()
        .filter(|(i, r)| {
            (r.age > rough_age || (widened && r.age == rough_age))
                && !taken.contains(i)
                && eligible(query, r, policy, gender_required, rough_age)
        })
        .map(|(i, _)| i)
        .collect();
    let above_pick = draw(rng, &above, policy.num_above, Stratum::Above, rough_age)?;
    Ok(below_pick
        .into_iter()
        .chain(above_pick)
        .map(|i| pool[i].clone())
        .collect())
}

/// Draws `num_below` references younger than `rough_age` and `num_above`
/// older, uniformly within each stratum, gender-matched when the policy
/// requires it and the query's gender is known.
pub fn select_references<R: Rng + ?Sized>(
    query: &QueryItem,
    pool: &[ReferenceItem],
    policy: &SelectionPolicy,
    rough_age: u32,
    rng: &mut R,
) -> Result<Vec<ReferenceItem>, SelectionError> {
    select_inner(query, pool, policy, rough_age, rng, policy.gender_match_required, false)
}

/// Like [`select_references`], but on `InsufficientPool` first drops the
/// gender constraint and then lets references at exactly `rough_age` fill
/// either stratum.
pub fn select_references_with_fallback<R: Rng + Clone>(
    query: &QueryItem,
    pool: &[ReferenceItem],
    policy: &SelectionPolicy,
    rough_age: u32,
    rng: &mut R,
) -> Result<(Vec<ReferenceItem>, Relaxation), SelectionError> {
    let attempts = [
        (policy.gender_match_required, false, Relaxation::None),
        (false, false, Relaxation::GenderRelaxed),
        (false, true, Relaxation::StrataWidened),
    ];
    let mut last_err = SelectionError::EmptyPolicy;
    for (gender_required, widened, relaxation) in attempts {
        if relaxation == Relaxation::GenderRelaxed && !policy.gender_match_required {
            continue;
        }
        // each attempt starts from the same generator state so a success at
        // level n does not depend on how far earlier attempts got
        let mut attempt_rng = rng.clone();
        match select_inner(
            query,
            pool,
            policy,
            rough_age,
            &mut attempt_rng,
            gender_required,
            widened,
        ) {
            Ok(refs) => {
                *rng = attempt_rng;
                return Ok((refs, relaxation));
            }
            Err(e @ SelectionError::EmptyPolicy) => return Err(e),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Rough age used to bracket the references: the query's hint if it has one,
/// otherwise `fallback` (the grid midpoint by convention).
pub fn rough_age_estimate(query: &QueryItem, fallback: u32) -> u32 {
    query.rough_age_hint.unwrap_or(fallback)
}

/// Picks references one at a time, bracketing the current posterior mode.
///
/// Used when [`SelectionPolicy::adaptive`] is set. Below/above quotas from the
/// policy are respected; the stratum with the larger unfilled share goes next.
#[derive(Debug, Clone)]
pub struct AdaptiveSelector {
    policy: SelectionPolicy,
    used: BTreeSet<String>,
    below_done: usize,
    above_done: usize,
}

impl AdaptiveSelector {
    pub fn new(policy: SelectionPolicy) -> Result<Self, SelectionError> {
        policy.validate()?;
        Ok(Self {
            policy,
            used: BTreeSet::new(),
            below_done: 0,
            above_done: 0,
        })
    }

    pub fn remaining(&self) -> usize {
        self.policy.total() - self.below_done - self.above_done
    }

    /// Next reference, or `Ok(None)` when the quotas are met. Gender and
    /// stratum fallbacks mirror [`select_references_with_fallback`].
    pub fn next<R: Rng + ?Sized>(
        &mut self,
        query: &QueryItem,
        pool: &[ReferenceItem],
        posterior: &AgeDistribution,
        rng: &mut R,
    ) -> Result<Option<ReferenceItem>, SelectionError> {
        let need_below = self.policy.num_below - self.below_done;
        let need_above = self.policy.num_above - self.above_done;
        if need_below + need_above == 0 {
            return Ok(None);
        }
        let center = posterior.mode();
        let stratum = if need_below * self.policy.num_above >= need_above * self.policy.num_below && need_below > 0 {
            Stratum::Below
        } else {
            Stratum::Above
        };
        let gender_levels: &[bool] = if self.policy.gender_match_required {
            &[true, false]
        } else {
            &[false]
        };
        for widened in [false, true] {
            for &gender_required in gender_levels {
                let candidates: Vec<usize> = pool
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| {
                        let side = match stratum {
                            Stratum::Below => r.age < center,
                            Stratum::Above => r.age > center,
                        };
                        (side || (widened && r.age == center))
                            && !self.used.contains(&r.id)
                            && eligible(query, r, &self.policy, gender_required, center)
                    })
                    .map(|(i, _)| i)
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                let pick = &pool[candidates[rng.random_range(0..candidates.len())]];
                self.used.insert(pick.id.clone());
                match stratum {
                    Stratum::Below => self.below_done += 1,
                    Stratum::Above => self.above_done += 1,
                }
                return Ok(Some(pick.clone()));
            }
        }
        Err(SelectionError::InsufficientPool {
            stratum,
            rough_age: center,
            needed: 1,
            available: 0,
        })
    }
}

/// Reference pool with `per_age` items of each gender at every grid age.
pub fn synthetic_reference_pool(grid: AgeGrid, per_age: usize) -> Vec<ReferenceItem> {
    let mut pool = Vec::with_capacity(grid.len() * per_age * 2);
    for age in grid.ages() {
        for gender in [Gender::Female, Gender::Male] {
            let tag = match gender {
                Gender::Female => 'f',
                _ => 'm',
            };
            for i in 0..per_age {
                let id = alloc::format!("ref-{age:03}-{tag}-{i}");
                pool.push(ReferenceItem {
                    image_uri: alloc::format!("synthetic://{id}"),
                    id,
                    age,
                    gender,
                });
            }
        }
    }
    pool
}
