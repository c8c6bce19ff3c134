mod common;

use std::fs::OpenOptions;
use std::io::Write;

use agepost::service::{AnnotationService, ServiceConfig};
use agepost_core::pipeline::{finalize_annotation, synthetic_reference_pool};
use agepost_core::{AgeDistribution, AgeGrid, LogisticModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn open(path: &std::path::Path, config: ServiceConfig) -> AnnotationService {
    AnnotationService::open(
        config,
        synthetic_reference_pool(AgeGrid::DEFAULT, 2),
        path,
        false,
        common::counter_clock(0),
    )
    .unwrap()
}

#[test]
fn reopened_state_equals_live_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let mut live = open(&path, ServiceConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    common::drive(&mut live, 20, &mut rng);
    let recovered = open(&path, ServiceConfig::default());
    assert_eq!(recovered.state(), live.state());

    // keep going on the recovered instance; seq continues without gaps
    let mut resumed = recovered;
    let before = resumed.state().seq;
    let view = resumed.create_task(common::query(999, &mut rng)).unwrap();
    assert_eq!(resumed.state().seq, before + 1);
    assert_eq!(view.task_id, "task-000021");
    let again = open(&path, ServiceConfig::default());
    assert_eq!(again.state(), resumed.state());
}

#[test]
fn exports_match_offline_recomputation() {
    let mut svc = AnnotationService::in_memory(
        ServiceConfig::default(),
        synthetic_reference_pool(AgeGrid::DEFAULT, 2),
        common::counter_clock(0),
    );
    common::drive(&mut svc, 30, &mut ChaCha8Rng::seed_from_u64(2));
    let prior = AgeDistribution::uniform(AgeGrid::DEFAULT);
    let exported = svc.export(true);
    assert_eq!(exported.len(), 30);
    for rec in exported {
        let offline = finalize_annotation(
            rec.query_id.clone(),
            rec.events.clone(),
            &LogisticModel::default(),
            &prior,
        )
        .unwrap();
        assert_eq!(
            serde_json::to_string(rec).unwrap(),
            serde_json::to_string(&offline).unwrap()
        );
    }
}

#[test]
fn snapshots_and_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let mut live = open(&path, ServiceConfig::default());
    common::drive(&mut live, 160, &mut ChaCha8Rng::seed_from_u64(3));
    assert!(live.state().seq > 1000);
    let snap = dir.path().join("events.jsonl.snapshot");
    assert!(snap.exists());
    assert_eq!(open(&path, ServiceConfig::default()).state(), live.state());

    // a crash mid-append leaves half a line behind
    let mut f = OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(br#"{"seq":99999,"kind":"Comparison"#).unwrap();
    drop(f);
    assert_eq!(open(&path, ServiceConfig::default()).state(), live.state());

    // without the snapshot the full log replays to the same place
    std::fs::remove_file(&snap).unwrap();
    assert_eq!(open(&path, ServiceConfig::default()).state(), live.state());
}

#[test]
fn changed_model_is_detected_on_replay() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let mut live = open(&path, ServiceConfig::default());
    common::drive(&mut live, 5, &mut ChaCha8Rng::seed_from_u64(4));
    let other = ServiceConfig {
        model: LogisticModel::new(0.5).unwrap(),
        ..ServiceConfig::default()
    };
    let err = AnnotationService::open(other, Vec::new(), &path, false, common::counter_clock(0)).unwrap_err();
    assert_eq!(err.code(), "corrupt_log");
}
