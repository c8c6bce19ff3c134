use std::collections::BTreeSet;

use agepost_core::pipeline::{
    build_gt_posterior, select_references, synthetic_reference_pool, Gender, GroundTruthSpec, QueryItem, ReferenceItem,
    SelectionPolicy,
};
use agepost_core::sim::{label_query, AnnotatorMode, SimulatedAnnotator};
use agepost_core::{AgeDistribution, AgeGrid, LogisticModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pool_strategy() -> impl Strategy<Value = Vec<ReferenceItem>> {
    prop::collection::vec((0u32..=70, prop::bool::ANY), 1..80).prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (age, female))| ReferenceItem {
                id: format!("r{i}"),
                image_uri: format!("img://r{i}"),
                age,
                gender: if female { Gender::Female } else { Gender::Male },
            })
            .collect()
    })
}

fn query(gender: Gender) -> QueryItem {
    QueryItem {
        id: "q".into(),
        image_uri: "img://q".into(),
        gender,
        rough_age_hint: None,
    }
}

proptest! {
    #[test]
    fn selection_invariants(
        pool in pool_strategy(),
        rough in 0u32..=70,
        below in 0usize..4,
        above in 0usize..4,
        female in prop::bool::ANY,
        seed in any::<u64>(),
    ) {
        prop_assume!(below + above > 0);
        let policy = SelectionPolicy { num_below: below, num_above: above, max_age_gap: None, ..SelectionPolicy::default() };
        let gender = if female { Gender::Female } else { Gender::Male };
        let q = query(gender);
        let run = || select_references(&q, &pool, &policy, rough, &mut ChaCha8Rng::seed_from_u64(seed));
        match run() {
            Ok(refs) => {
                prop_assert_eq!(refs.len(), below + above);
                let ids: BTreeSet<_> = refs.iter().map(|r| &r.id).collect();
                prop_assert_eq!(ids.len(), refs.len());
                prop_assert!(refs.iter().all(|r| r.gender == gender));
                prop_assert!(refs[..below].iter().all(|r| r.age < rough));
                prop_assert!(refs[below..].iter().all(|r| r.age > rough));
                prop_assert_eq!(run().unwrap(), refs);
            }
            Err(_) => {
                let matching = |pred: &dyn Fn(u32) -> bool| {
                    pool.iter().filter(|r| r.gender == gender && pred(r.age)).count()
                };
                prop_assert!(matching(&|a| a < rough) < below || matching(&|a| a > rough) < above);
            }
        }
    }

    #[test]
    fn exact_age_targets(age in 8u32..=62) {
        let d = build_gt_posterior(&GroundTruthSpec::ExactAge { age }, AgeGrid::DEFAULT).unwrap();
        prop_assert_eq!(d.mode(), age);
        prop_assert!(d.confidence_interval(0.9).width() <= 8);
    }

    #[test]
    fn group_targets_have_no_mass_outside(lo in 0u32..=70, len in 0u32..20) {
        let hi = (lo + len).min(70);
        let d = build_gt_posterior(&GroundTruthSpec::AgeGroup { lo, hi: Some(hi) }, AgeGrid::DEFAULT).unwrap();
        for (a, m) in d.iter() {
            prop_assert_eq!(m > 0.0, (lo..=hi).contains(&a));
        }
    }
}

#[test]
fn truthful_bracketing_labels_near_truth() {
    let grid = AgeGrid::DEFAULT;
    let pool = synthetic_reference_pool(grid, 3);
    let model = LogisticModel::default();
    let prior = AgeDistribution::uniform(grid);
    let policy = SelectionPolicy {
        max_age_gap: Some(5),
        ..SelectionPolicy::default()
    };
    let mut discarded = 0;
    for t in 0..200u64 {
        let q = QueryItem {
            rough_age_hint: Some(30),
            ..query(Gender::Male)
        };
        let mut ann = SimulatedAnnotator::new(0.36, AnnotatorMode::Truthful, 11)
            .unwrap()
            .with_stream(t);
        let rec = label_query(&q, 30, &pool, &policy, &mut ann, &model, &prior, t).unwrap();
        assert!(rec.mode.abs_diff(30) <= 3, "trial {t}: mode {}", rec.mode);
        discarded += usize::from(rec.is_discarded());
    }
    assert!(discarded < 20);
}
