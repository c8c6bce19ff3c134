//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any failed.

mod common;

use std::time::{Duration, Instant};

use agepost::service::{AnnotationService, ServiceConfig};
use agepost_core::head::synth::SyntheticGenerator;
use agepost_core::head::{
    loss_cost_sensitive, loss_kl, predict, train, FeatureVector, LossMode, OrdinalHead, TrainConfig,
};
use agepost_core::pipeline::{finalize_annotation, synthetic_reference_pool, SelectionPolicy};
use agepost_core::sim::{ci_narrowing_experiment, evaluate, AnnotatorMode, ExperimentConfig, ExperimentRow};
use agepost_core::{
    fit_beta, posterior_from_events, AgeDistribution, AgeGrid, BetaSample, ComparisonEvent, LogisticModel, Outcome,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: AgeGrid = AgeGrid::DEFAULT;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn likelihood_anchors() -> Verdict {
    let m = LogisticModel::new(0.36).unwrap();
    let (p5, p10) = (m.prob_older(5.0), m.prob_older(10.0));
    let pass = (p5 - 0.8581).abs() <= 5e-4 && (p10 - 0.9734).abs() <= 5e-4;
    verdict(pass, format!("P(older | +5) = {p5:.6}, P(older | +10) = {p10:.6}"))
}

fn posterior_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for set in 0..1000 {
        let beta = rng.random_range(0.05..2.0);
        let model = LogisticModel::new(beta).unwrap();
        let prior = if set % 2 == 0 {
            AgeDistribution::uniform(GRID)
        } else {
            AgeDistribution::from_weights(GRID, (0..71).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap()
        };
        let events: Vec<ComparisonEvent> = (0..rng.random_range(0..=12))
            .map(|_| ComparisonEvent::bare(rng.random_range(0..=70), Outcome::from_older(rng.random_bool(0.5))))
            .collect();
        let got = posterior_from_events(&model, &prior, &events).unwrap();
        // plain products, no logs
        let raw: Vec<f64> = (0..=70u32)
            .map(|a| {
                events.iter().fold(prior.prob(a), |acc, e| {
                    let x = beta * (a as f64 - e.ref_age as f64);
                    acc * if e.outcome == Outcome::Older { sig(x) } else { sig(-x) }
                })
            })
            .collect();
        let z: f64 = raw.iter().sum();
        for (g, r) in got.mass().iter().zip(&raw) {
            worst = worst.max((g - r / z).abs());
        }
    }
    verdict(worst <= 1e-9, format!("1000 event sets, max per-bin error {worst:.2e}"))
}

fn random_head(rng: &mut impl Rng) -> (OrdinalHead, FeatureVector) {
    let d = rng.random_range(1..8);
    let beta = rng.random_range(0.05..2.0);
    let w = (0..70 * (d + 1)).map(|_| rng.random_range(-0.5..0.5)).collect();
    let head = OrdinalHead::from_weights(GRID, d, 70, LogisticModel::new(beta).unwrap(), w).unwrap();
    let x = FeatureVector::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    (head, x)
}

fn product_posterior(head: &OrdinalHead, x: &FeatureVector) -> Vec<f64> {
    let beta = head.model().beta();
    let d = head.dim();
    let f: Vec<f64> = (0..70)
        .map(|k| {
            let row = head.row(k);
            sig(row[..d].iter().zip(x.as_slice()).map(|(w, v)| w * v).sum::<f64>() + row[d])
        })
        .collect();
    let logs: Vec<f64> = (0..=70)
        .map(|a| {
            f.iter()
                .enumerate()
                .map(|(k, &fk)| {
                    let x = beta * (a as f64 - k as f64);
                    fk * sig(x).ln() + (1.0 - fk) * sig(-x).ln()
                })
                .sum()
        })
        .collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

fn head_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_p, mut worst_w): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let (head, x) = random_head(&mut rng);
        let p = head.forward_posterior(&x).unwrap();
        for (a, b) in p.mass().iter().zip(product_posterior(&head, &x)) {
            worst_p = worst_p.max((a - b).abs());
        }
        let beta = head.model().beta();
        let map = head.posterior_map();
        for a in 0..71 {
            for k in 0..70 {
                worst_w = worst_w.max((map.weight(a, k) - beta * (a as f64 - k as f64)).abs());
            }
        }
    }
    verdict(
        worst_p <= 1e-9 && worst_w <= 1e-12,
        format!("1000 heads, posterior error {worst_p:.2e}, FC weight error {worst_w:.2e}"),
    )
}

fn max_rel_grad_error(head: &OrdinalHead, analytic: &[f64], loss: impl Fn(&OrdinalHead) -> f64) -> f64 {
    // cross-entropy values reach the hundreds at large beta; smaller steps
    // drown near-zero components in rounding noise
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut probe = head.clone();
    for (i, a) in analytic.iter().enumerate() {
        let w0 = head.weights()[i];
        let mut at = |w: f64| {
            probe.weights_mut()[i] = w;
            let l = loss(&probe);
            probe.weights_mut()[i] = w0;
            l
        };
        let n = (at(w0 + h) - at(w0 - h)) / (2.0 * h);
        worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
    }
    worst
}

fn gradient_checks() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut hyper, mut kl): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let (head, x) = random_head(&mut rng);
        let a_gt = rng.random_range(0..=70);
        let g = loss_cost_sensitive(&head, &x, a_gt).unwrap().grad;
        hyper = hyper.max(max_rel_grad_error(&head, &g, |h| {
            loss_cost_sensitive(h, &x, a_gt).unwrap().loss
        }));

        let (head, x) = random_head(&mut rng);
        let p_gt = AgeDistribution::from_weights(GRID, (0..71).map(|_| rng.random_range(1e-3..1.0)).collect()).unwrap();
        let g = loss_kl(&head, &x, &p_gt).unwrap().grad;
        kl = kl.max(max_rel_grad_error(&head, &g, |h| loss_kl(h, &x, &p_gt).unwrap().loss));
    }
    verdict(
        hyper < 1e-4 && kl < 1e-4,
        format!("100 configs each, max rel error hyper {hyper:.2e}, kl {kl:.2e}"),
    )
}

fn narrowing_rows() -> Vec<ExperimentRow> {
    let cfg = ExperimentConfig {
        grid: GRID,
        model: LogisticModel::new(0.36).unwrap(),
        beta_true: 0.36,
        annotator_mode: AnnotatorMode::Truthful,
        policy: SelectionPolicy {
            num_below: 1,
            num_above: 1,
            ..SelectionPolicy::default()
        },
        trials: 10_000,
        comparisons: vec![1, 2, 4, 6],
        refs_per_age: 4,
        rough_age_noise: 0.0,
        seed: 404,
    };
    ci_narrowing_experiment(&cfg).unwrap()
}

fn ci_narrowing_medians(rows: &[ExperimentRow]) -> Verdict {
    let medians: Vec<f64> = rows.iter().map(|r| r.median_width).collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let discard = rows[3].discard_rate;
    verdict(
        decreasing && discard < 0.10,
        format!("medians over M=1,2,4,6: {medians:?}; discard at M=6 {discard:.4}"),
    )
}

fn ci_narrowing_sharp_fraction(rows: &[ExperimentRow]) -> Verdict {
    let f = rows[3].frac_lt8;
    verdict(
        (0.5..=1.0).contains(&f),
        format!("fraction of widths < 8 at M=6: {f:.4}, band [0.5, 1.0]"),
    )
}

fn training_ablation() -> Verdict {
    let dim = agepost_core::head::synth::DEFAULT_FEATURE_DIM;
    let gen = SyntheticGenerator::new(7, GRID, dim).unwrap();
    let train_set = gen.sample(5000, 0).unwrap();
    let test_set = gen.sample(1000, 1).unwrap();
    let truths: Vec<u32> = test_set.iter().map(|s| s.gt.point_age(GRID).unwrap()).collect();
    let ca3 = |mode: LossMode| {
        let head = OrdinalHead::new(GRID, dim, LogisticModel::default());
        let cfg = TrainConfig {
            mode,
            ..TrainConfig::default()
        };
        let trained = train(head, &train_set, &cfg).unwrap().head;
        let preds: Vec<u32> = test_set
            .iter()
            .map(|s| predict(&trained, &s.features, mode.default_predictor()).unwrap())
            .collect();
        evaluate(&preds, &truths, &[3]).unwrap().ca[&3]
    };
    let (both, hyper, kl) = (ca3(LossMode::Both), ca3(LossMode::HyperOnly), ca3(LossMode::KlOnly));
    verdict(
        both >= 85.0 && both >= hyper - 2.0 && both >= kl - 2.0,
        format!("CA(3) both {both:.1}, hyper-only {hyper:.1}, kl-only {kl:.1}"),
    )
}

fn service_replay() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let open = || {
        AnnotationService::open(
            ServiceConfig::default(),
            synthetic_reference_pool(GRID, 2),
            &path,
            false,
            common::counter_clock(1_700_000_000_000),
        )
        .unwrap()
    };
    let mut live = open();
    let ops = common::drive(&mut live, 100, &mut ChaCha8Rng::seed_from_u64(505));
    let replayed = open();
    let same_state = replayed.state() == live.state();

    let prior = AgeDistribution::uniform(GRID);
    let model = LogisticModel::default();
    let exported = replayed.export(true);
    let mismatches = exported
        .iter()
        .filter(|rec| {
            let offline = finalize_annotation(rec.query_id.clone(), rec.events.clone(), &model, &prior).unwrap();
            let bits = |d: &AgeDistribution| d.mass().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            bits(&offline.posterior) != bits(&rec.posterior)
                || serde_json::to_string(&offline).unwrap() != serde_json::to_string(rec).unwrap()
        })
        .count();
    verdict(
        same_state && exported.len() == 100 && mismatches == 0,
        format!(
            "{ops} operations, {} log entries, state equal: {same_state}, {} records, {mismatches} mismatches",
            live.state().seq,
            exported.len()
        ),
    )
}

fn fit_round_trip() -> Verdict {
    let mut errors = Vec::new();
    for beta in [0.1, 0.36, 1.0] {
        let samples: Vec<BetaSample> = (-30..=30).map(|d| BetaSample::new(d, sig(beta * d as f64))).collect();
        let got = fit_beta(&samples).unwrap().beta();
        errors.push((beta, got - beta));
    }
    let pass = errors.iter().all(|(_, e)| e.abs() <= 1e-3);
    let detail = errors
        .iter()
        .map(|(b, e)| format!("{b}: {e:+.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(pass, format!("fit error by beta {detail}"))
}

fn main() {
    let mut failed = 0;
    let mut run = |name: &str, budget: Duration, check: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let within = took <= budget;
        let ok = v.pass && within;
        if !ok {
            failed += 1;
        }
        let timing = if within { "" } else { " (over time budget)" };
        println!(
            "{} {name}: {} [{:.2}s / {}s]{timing}",
            if ok { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    };
    let secs = Duration::from_secs;
    run("likelihood-anchors", secs(1), &mut likelihood_anchors);
    run("posterior-oracle", secs(10), &mut posterior_oracle);
    run("head-equivalence", secs(30), &mut head_equivalence);
    run("gradient-checks", secs(60), &mut gradient_checks);
    let mut rows = Vec::new();
    run("ci-narrowing", secs(120), &mut || {
        rows = narrowing_rows();
        ci_narrowing_medians(&rows)
    });
    run("ci-narrowing-sharp-fraction", secs(120), &mut || {
        ci_narrowing_sharp_fraction(&rows)
    });
    run("training-ablation", secs(300), &mut training_ablation);
    run("service-replay", secs(60), &mut service_replay);
    run("fit-beta-round-trip", secs(1), &mut fit_round_trip);
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
