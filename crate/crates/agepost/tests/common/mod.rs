//! Scripted clients shared by the replay tests and the acceptance suite.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use agepost::service::{AnnotationService, Clock, TaskStatus};
use agepost_core::pipeline::{Gender, QueryItem};
use agepost_core::Outcome;
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn counter_clock(start: i64) -> Clock {
    let t = Arc::new(AtomicI64::new(start));
    Arc::new(move || t.fetch_add(7, Ordering::SeqCst))
}

pub fn query(i: usize, rng: &mut impl Rng) -> QueryItem {
    QueryItem {
        id: format!("q-{i:04}"),
        image_uri: format!("img://q-{i:04}"),
        gender: *[Gender::Female, Gender::Male, Gender::Unknown].choose(rng).unwrap(),
        rough_age_hint: rng.random_bool(0.8).then(|| rng.random_range(0..=70)),
    }
}

/// Creates `tasks` tasks and drives them with randomly interleaved
/// submissions, rejected requests and (sometimes early) finalizations until
/// every task is closed. Returns the number of operations attempted.
pub fn drive(svc: &mut AnnotationService, tasks: usize, rng: &mut impl Rng) -> usize {
    let mut created = 0;
    let mut ops = 0;
    let mut hidden_age = Vec::new();
    loop {
        let open: Vec<String> = svc
            .state()
            .order
            .iter()
            .filter(|id| svc.state().tasks[*id].status == TaskStatus::Open)
            .cloned()
            .collect();
        if open.is_empty() && created == tasks {
            return ops;
        }
        ops += 1;
        if created < tasks && (open.is_empty() || rng.random_bool(0.3)) {
            let q = query(created, rng);
            svc.create_task(q).expect("pool is large enough");
            hidden_age.push(rng.random_range(0..=70u32));
            created += 1;
            continue;
        }
        let id = open.choose(rng).unwrap().clone();
        let idx: usize = id.trim_start_matches("task-").parse::<usize>().unwrap() - 1;
        let task = &svc.state().tasks[&id];
        let pending: Vec<String> = task.pending_refs.iter().map(|r| r.id.clone()).collect();
        let n_events = task.events.len();
        match rng.random_range(0..10) {
            0 if pending.len() > 1 => {
                let err = svc
                    .submit_comparison(&id, &pending[1], Outcome::Older, "bot")
                    .unwrap_err();
                assert_eq!(err.code(), "out_of_order_reference");
            }
            1 if n_events > 0 && rng.random_bool(0.3) => {
                svc.finalize_task(&id, true).unwrap();
            }
            _ if pending.is_empty() => {
                svc.finalize_task(&id, false).unwrap();
            }
            _ => {
                let r = &svc.state().tasks[&id].pending_refs[0];
                let outcome = if rng.random_bool(0.1) {
                    Outcome::from_older(rng.random_bool(0.5))
                } else {
                    Outcome::from_older(hidden_age[idx] > r.age)
                };
                let annotator = format!("ann-{}", rng.random_range(0..3));
                svc.submit_comparison(&id, &pending[0], outcome, &annotator).unwrap();
            }
        }
    }
}
