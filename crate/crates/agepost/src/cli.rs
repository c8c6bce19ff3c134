//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid arguments or configuration, 3 bad or
//! missing input data, 4 runtime failure.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, RwLock};

use agepost_core::head::{
    predict, train, Checkpoint, LossMode, OrdinalHead, Predictor, Sample, SyntheticGenerator, TrainConfig,
    DEFAULT_FEATURE_DIM,
};
use agepost_core::pipeline::{
    synthetic_reference_pool, AnnotationRecord, Gender, QueryItem, ReferenceItem, SelectionPolicy,
};
use agepost_core::sim::{
    ci_narrowing_experiment, evaluate, label_query, AnnotatorMode, ExperimentConfig, MetricReport, SimulatedAnnotator,
    CA_RULE,
};
use agepost_core::{fit_beta, AgeDistribution, AgeGrid, LogisticModel};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::io::{self as files, CatalogQuery, DataError};
use crate::service::{system_clock, AnnotationService, ServiceConfig};

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Data(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn validation(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "agepost", version, about = "Age posteriors from pairwise comparisons")]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0, env = "AGEPOST_SEED")]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Steepness of the logistic comparison model.
    #[arg(long, default_value_t = agepost_core::comparison::DEFAULT_BETA, env = "AGEPOST_BETA")]
    pub beta: f64,
    #[arg(long, default_value_t = 0, env = "AGEPOST_GRID_MIN")]
    pub grid_min: u32,
    #[arg(long, default_value_t = 70, env = "AGEPOST_GRID_MAX")]
    pub grid_max: u32,
}

impl ModelArgs {
    fn grid(&self) -> Result<AgeGrid, Failure> {
        AgeGrid::new(self.grid_min, self.grid_max).map_err(validation)
    }

    fn model(&self) -> Result<LogisticModel, Failure> {
        LogisticModel::new(self.beta).map_err(validation)
    }
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    #[arg(long, default_value_t = 3, env = "AGEPOST_NUM_BELOW")]
    pub num_below: usize,
    #[arg(long, default_value_t = 3, env = "AGEPOST_NUM_ABOVE")]
    pub num_above: usize,
    /// Allow references of the other gender.
    #[arg(long)]
    pub no_gender_match: bool,
    /// Only use references within this many years of the rough age.
    #[arg(long, default_value_t = 10, conflicts_with = "any_age_gap")]
    pub max_age_gap: u32,
    /// Draw references from the whole stratum regardless of age gap.
    #[arg(long)]
    pub any_age_gap: bool,
}

impl PolicyArgs {
    fn policy(&self, seed: u64, adaptive: bool) -> Result<SelectionPolicy, Failure> {
        let p = SelectionPolicy {
            num_below: self.num_below,
            num_above: self.num_above,
            gender_match_required: !self.no_gender_match,
            rng_seed: seed,
            max_age_gap: (!self.any_age_gap).then_some(self.max_age_gap),
            adaptive,
        };
        p.validate().map_err(validation)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Stochastic,
    Truthful,
}

impl From<ModeArg> for AnnotatorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Stochastic => AnnotatorMode::Stochastic,
            ModeArg::Truthful => AnnotatorMode::Truthful,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    HyperOnly,
    KlOnly,
    Both,
}

impl From<LossArg> for LossMode {
    fn from(m: LossArg) -> Self {
        match m {
            LossArg::HyperOnly => LossMode::HyperOnly,
            LossArg::KlOnly => LossMode::KlOnly,
            LossArg::Both => LossMode::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PredictorArg {
    Ohrank,
    PosteriorMode,
}

impl From<PredictorArg> for Predictor {
    fn from(p: PredictorArg) -> Self {
        match p {
            PredictorArg::Ohrank => Predictor::Ohrank,
            PredictorArg::PosteriorMode => Predictor::PosteriorMode,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit β to a CSV of `age_diff,frac_older` rows.
    FitBeta { input: PathBuf },
    /// Write a synthetic reference pool and query catalog.
    GenCatalog {
        #[arg(long, default_value_t = 100)]
        queries: usize,
        #[arg(long, default_value_t = 2)]
        refs_per_age: usize,
        /// Standard deviation of the rough-age hint around the true age.
        #[arg(long, default_value_t = 3.0)]
        hint_noise: f64,
        /// Leave rough-age hints out of the catalog.
        #[arg(long)]
        no_hints: bool,
        #[arg(long)]
        out_queries: PathBuf,
        #[arg(long)]
        out_refs: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Label a query catalog, either with a simulated annotator or by
    /// queueing tasks on a running service.
    #[command(group(clap::ArgGroup::new("source").required(true).args(["simulate", "serve_assist"])))]
    Label {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        refs: Option<PathBuf>,
        /// Annotation records (or created tasks, with --serve-assist) as JSON lines.
        #[arg(long)]
        out: PathBuf,
        /// Simulate an annotator with this β.
        #[arg(long, value_name = "BETA")]
        simulate: Option<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Stochastic)]
        annotator_mode: ModeArg,
        #[arg(long, default_value = "sim")]
        annotator_id: String,
        /// Base URL of an annotation service to create tasks on.
        #[arg(long, value_name = "URL")]
        serve_assist: Option<String>,
        /// Re-bracket around the running posterior mode after every answer.
        #[arg(long)]
        adaptive: bool,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// CI-narrowing experiment; CSV on stdout or --out.
    Simulate {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = agepost_core::comparison::DEFAULT_BETA)]
        beta_true: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Stochastic)]
        annotator_mode: ModeArg,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,6,8")]
        comparisons: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        refs_per_age: usize,
        #[arg(long, default_value_t = 0.0)]
        rough_noise: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Train the ordinal head; writes a checkpoint and a loss trace.
    Train {
        /// JSON lines of `{"features": [...], "gt": {...}}`; synthetic data when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_FEATURE_DIM)]
        dim: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, value_enum, default_value_t = LossArg::Both)]
        loss: LossArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Metric report for a checkpoint, or for annotations against known ages.
    Eval {
        #[arg(long, conflicts_with_all = ["annotations", "truths"], required_unless_present = "annotations")]
        checkpoint: Option<PathBuf>,
        /// Test samples as JSON lines; held-out synthetic data when absent.
        #[arg(long, requires = "checkpoint")]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, value_enum, default_value_t = PredictorArg::PosteriorMode)]
        predictor: PredictorArg,
        #[arg(long, requires = "truths")]
        annotations: Option<PathBuf>,
        /// Query catalog with `true_age`.
        #[arg(long, requires = "annotations")]
        truths: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
        ca: Vec<u32>,
    },
    /// Run the annotation service until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080", env = "AGEPOST_LISTEN")]
        listen: SocketAddr,
        #[arg(long, env = "AGEPOST_REFS")]
        refs: PathBuf,
        /// Event log; state is kept in memory only when absent.
        #[arg(long, env = "AGEPOST_LOG")]
        log: Option<PathBuf>,
        /// Flush appends without fsync.
        #[arg(long)]
        no_fsync: bool,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        policy: PolicyArgs,
    },
}

struct Output<'a> {
    json: bool,
    out: &'a mut dyn Write,
}

impl Output<'_> {
    /// JSON when `--json`, otherwise the text lines.
    fn emit(&mut self, value: &impl Serialize, text: impl FnOnce() -> String) -> Result<(), Failure> {
        let s = if self.json {
            serde_json::to_string(value).expect("outputs always serialize")
        } else {
            text()
        };
        writeln!(self.out, "{s}").map_err(runtime)
    }
}

fn load_pool(path: Option<&Path>, grid: AgeGrid) -> Result<Vec<ReferenceItem>, Failure> {
    let path = path.ok_or_else(|| Failure::Data("insufficient reference pool: no --refs file given".into()))?;
    let pool: Vec<ReferenceItem> =
        files::read_jsonl(path).map_err(|e| Failure::Data(format!("insufficient reference pool: {e}")))?;
    if let Some(r) = pool.iter().find(|r| !grid.contains(r.age)) {
        return Err(Failure::Data(format!(
            "reference {} has age {} outside grid {grid}",
            r.id, r.age
        )));
    }
    Ok(pool)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let seed = cli.seed;
    let mut out = Output { json: cli.json, out };
    match cli.command {
        Command::FitBeta { input } => {
            let samples = files::read_beta_samples(&input)?;
            let model = fit_beta(&samples).map_err(data)?;
            out.emit(&json!({"beta": model.beta(), "samples": samples.len()}), || {
                format!("{:.6}", model.beta())
            })
        }
        Command::GenCatalog {
            queries,
            refs_per_age,
            hint_noise,
            no_hints,
            out_queries,
            out_refs,
            model,
        } => {
            let grid = model.grid()?;
            let noise = rand_distr::Normal::new(0.0, hint_noise).map_err(validation)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let catalog: Vec<CatalogQuery> = (1..=queries)
                .map(|i| {
                    let age = rng.random_range(grid.min_age()..=grid.max_age());
                    let gender = if rng.random::<bool>() {
                        Gender::Female
                    } else {
                        Gender::Male
                    };
                    let offset = rand_distr::Distribution::sample(&noise, &mut rng).round() as i64;
                    let id = format!("q-{i:05}");
                    CatalogQuery {
                        query: QueryItem {
                            image_uri: format!("synthetic://{id}"),
                            id,
                            gender,
                            rough_age_hint: (!no_hints).then(|| grid.clamp(age as i64 + offset)),
                        },
                        true_age: Some(age),
                    }
                })
                .collect();
            let pool = synthetic_reference_pool(grid, refs_per_age);
            files::write_jsonl(files::create(&out_queries)?, &catalog).map_err(runtime)?;
            files::write_jsonl(files::create(&out_refs)?, &pool).map_err(runtime)?;
            out.emit(&json!({"queries": catalog.len(), "references": pool.len()}), || {
                format!("wrote {} queries and {} references", catalog.len(), pool.len())
            })
        }
        Command::Label {
            queries,
            refs,
            out: out_path,
            simulate,
            annotator_mode,
            annotator_id,
            serve_assist,
            adaptive,
            model,
            policy,
        } => {
            let grid = model.grid()?;
            let lmodel = model.model()?;
            let policy = policy.policy(seed, adaptive)?;
            let catalog: Vec<CatalogQuery> = files::read_jsonl(&queries)?;
            if let Some(url) = serve_assist {
                return assist(&url, &catalog, &out_path, &mut out);
            }
            let beta_sim = simulate.expect("clap requires one source");
            let pool = load_pool(refs.as_deref(), grid)?;
            let prior = AgeDistribution::uniform(grid);
            let base = SimulatedAnnotator::new(beta_sim, annotator_mode.into(), seed)
                .map_err(validation)?
                .with_id(annotator_id);
            let mut records = Vec::with_capacity(catalog.len());
            for (i, item) in catalog.iter().enumerate() {
                let true_age = item.true_age.ok_or_else(|| {
                    Failure::Data(format!("query {} has no true_age to simulate from", item.query.id))
                })?;
                if !grid.contains(true_age) {
                    return Err(Failure::Data(format!(
                        "query {}: true_age {true_age} outside grid {grid}",
                        item.query.id
                    )));
                }
                let mut ann = base.clone().with_stream(i as u64);
                let rec = label_query(
                    &item.query,
                    true_age,
                    &pool,
                    &policy,
                    &mut ann,
                    &lmodel,
                    &prior,
                    i as u64,
                )
                .map_err(|e| Failure::Data(format!("query {}: {e}", item.query.id)))?;
                records.push(rec);
            }
            files::write_jsonl(files::create(&out_path)?, &records).map_err(runtime)?;
            let discarded = records.iter().filter(|r| r.is_discarded()).count();
            let summary = json!({
                "total": records.len(),
                "labelled": records.len() - discarded,
                "discarded": discarded,
            });
            out.emit(&summary, || {
                format!(
                    "labelled {} discarded {} of {}",
                    records.len() - discarded,
                    discarded,
                    records.len()
                )
            })
        }
        Command::Simulate {
            trials,
            beta_true,
            annotator_mode,
            comparisons,
            refs_per_age,
            rough_noise,
            out: out_path,
            model,
            policy,
        } => {
            let cfg = ExperimentConfig {
                grid: model.grid()?,
                model: model.model()?,
                beta_true,
                annotator_mode: annotator_mode.into(),
                policy: SelectionPolicy {
                    num_below: 1,
                    num_above: 1,
                    ..policy.policy(seed, false).unwrap_or_default()
                },
                trials,
                comparisons,
                refs_per_age,
                rough_age_noise: rough_noise,
                seed,
            };
            let rows = ci_narrowing_experiment(&cfg).map_err(validation)?;
            match out_path {
                Some(p) => {
                    files::write_experiment(files::create(&p)?, &rows).map_err(runtime)?;
                    out.emit(&rows, || format!("wrote {} rows to {}", rows.len(), p.display()))
                }
                None if out.json => out.emit(&rows, String::new),
                None => files::write_experiment(&mut *out.out, &rows).map_err(runtime),
            }
        }
        Command::Train {
            data: data_path,
            n,
            dim,
            epochs,
            lr,
            batch,
            loss,
            out: out_path,
            trace,
            model,
        } => {
            let grid = model.grid()?;
            let lmodel = model.model()?;
            let dataset: Vec<Sample> = match &data_path {
                Some(p) => files::read_jsonl(p)?,
                None => SyntheticGenerator::new(seed, grid, dim)
                    .and_then(|g| g.sample(n, 0))
                    .map_err(validation)?,
            };
            let dim = dataset.first().map_or(dim, |s| s.features.dim());
            if let Some(i) = dataset.iter().position(|s| s.features.dim() != dim) {
                return Err(Failure::Data(format!(
                    "sample {i} has a different feature dimension than sample 0"
                )));
            }
            let config = TrainConfig {
                learning_rate: lr,
                epochs,
                batch_size: batch,
                mode: loss.into(),
                seed,
            };
            let outcome = train(OrdinalHead::new(grid, dim, lmodel), &dataset, &config).map_err(|e| match e {
                agepost_core::head::TrainError::InvalidConfig(_) | agepost_core::head::TrainError::EmptyDataset => {
                    validation(e)
                }
                agepost_core::head::TrainError::GroundTruth { .. } | agepost_core::head::TrainError::Head(_) => data(e),
                agepost_core::head::TrainError::NonFiniteLoss { .. } => runtime(e),
            })?;
            let mut w = files::create(&out_path)?;
            serde_json::to_writer(&mut w, &outcome.head.to_checkpoint()).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            if let Some(p) = &trace {
                files::write_loss_trace(files::create(p)?, &outcome.trace).map_err(runtime)?;
            }
            let last = outcome.trace.last().copied();
            out.emit(
                &json!({"samples": dataset.len(), "epochs": epochs, "final": last}),
                || match last {
                    Some(l) => format!(
                        "trained {} epochs on {} samples: loss_hyper {:.6} loss_kl {:.6} loss_total {:.6}",
                        epochs,
                        dataset.len(),
                        l.loss_hyper,
                        l.loss_kl,
                        l.loss_total
                    ),
                    None => "no epochs run".into(),
                },
            )
        }
        Command::Eval {
            checkpoint,
            data: data_path,
            n,
            predictor,
            annotations,
            truths,
            ca,
        } => {
            let report = match (checkpoint, annotations, truths) {
                (Some(ck), _, _) => eval_checkpoint(&ck, data_path.as_deref(), n, seed, predictor.into(), &ca)?,
                (None, Some(a), Some(t)) => eval_annotations(&a, &t, &ca)?,
                _ => {
                    return Err(Failure::Validation(
                        "need --checkpoint or --annotations with --truths".into(),
                    ))
                }
            };
            out.emit(&report, || render_report(&report))
        }
        Command::Serve {
            listen,
            refs,
            log,
            no_fsync,
            model,
            policy,
        } => {
            let config = ServiceConfig {
                grid: model.grid()?,
                model: model.model()?,
                policy: policy.policy(seed, false)?,
            };
            let pool = load_pool(Some(&refs), config.grid)?;
            let svc = match &log {
                Some(p) => AnnotationService::open(config, pool, p, !no_fsync, system_clock()).map_err(data)?,
                None => AnnotationService::in_memory(config, pool, system_clock()),
            };
            serve(listen, svc, &mut out)
        }
    }
}

fn render_report(r: &MetricReport) -> String {
    let mut s = format!("# {CA_RULE}\nn\t{}\nmae\t{:.4}\n", r.n, r.mae);
    s += &format!(
        "exact_group_acc\t{:.2}\none_off_acc\t{:.2}\n",
        r.exact_group_acc, r.one_off_acc
    );
    for (n, v) in &r.ca {
        s += &format!("CA({n})\t{v:.2}\n");
    }
    s += &format!("recall_pm3\t{:.2}", r.recall_pm3);
    s
}

fn eval_checkpoint(
    path: &Path,
    data_path: Option<&Path>,
    n: usize,
    seed: u64,
    predictor: Predictor,
    ca: &[u32],
) -> Result<MetricReport, Failure> {
    let ck: Checkpoint = files::read_json(path)?;
    let head = OrdinalHead::from_checkpoint(&ck).map_err(data)?;
    let samples: Vec<Sample> = match data_path {
        Some(p) => files::read_jsonl(p)?,
        // stream 1 is disjoint from the training draw on stream 0
        None => SyntheticGenerator::new(seed, head.grid(), head.dim())
            .and_then(|g| g.sample(n, 1))
            .map_err(validation)?,
    };
    let mut preds = Vec::with_capacity(samples.len());
    let mut truths = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        preds.push(predict(&head, &s.features, predictor).map_err(|e| Failure::Data(format!("sample {i}: {e}")))?);
        truths.push(
            s.gt.point_age(head.grid())
                .map_err(|e| Failure::Data(format!("sample {i}: {e}")))?,
        );
    }
    evaluate(&preds, &truths, ca).map_err(data)
}

/// Labelled records' modes against the catalog's true ages; discarded
/// records are left out.
fn eval_annotations(annotations: &Path, truths: &Path, ca: &[u32]) -> Result<MetricReport, Failure> {
    let records: Vec<AnnotationRecord> = files::read_jsonl(annotations)?;
    let catalog: Vec<CatalogQuery> = files::read_jsonl(truths)?;
    let truth: BTreeMap<&str, Option<u32>> = catalog.iter().map(|c| (c.query.id.as_str(), c.true_age)).collect();
    let mut preds = Vec::new();
    let mut ages = Vec::new();
    for r in records.iter().filter(|r| !r.is_discarded()) {
        let age = truth
            .get(r.query_id.as_str())
            .copied()
            .flatten()
            .ok_or_else(|| Failure::Data(format!("no true_age for query {}", r.query_id)))?;
        preds.push(r.mode);
        ages.push(age);
    }
    evaluate(&preds, &ages, ca).map_err(data)
}

#[derive(Debug, Serialize)]
struct AssistedTask {
    query_id: String,
    task_id: String,
    remaining: usize,
}

/// Queues every catalog query as a task on a running service for human
/// annotation.
fn assist(url: &str, catalog: &[CatalogQuery], out_path: &Path, out: &mut Output<'_>) -> Result<(), Failure> {
    let client = reqwest::blocking::Client::new();
    let endpoint = format!("{}/tasks", url.trim_end_matches('/'));
    let mut created = Vec::new();
    let mut failed = 0usize;
    for item in catalog {
        let resp = client
            .post(&endpoint)
            .json(&crate::http::CreateTaskRequest {
                query: item.query.clone(),
            })
            .send()
            .map_err(|e| Failure::Runtime(format!("cannot reach {endpoint}: {e}")))?;
        let status = resp.status();
        let body: serde_json::Value = resp.json().map_err(runtime)?;
        if status.is_success() {
            created.push(AssistedTask {
                query_id: item.query.id.clone(),
                task_id: body["task_id"].as_str().unwrap_or_default().to_string(),
                remaining: body["remaining"].as_u64().unwrap_or(0) as usize,
            });
        } else {
            failed += 1;
            tracing::warn!(query = %item.query.id, error = %body["error"], detail = %body["detail"], "task not created");
        }
    }
    files::write_jsonl(files::create(out_path)?, &created).map_err(runtime)?;
    out.emit(&json!({"created": created.len(), "failed": failed}), || {
        format!("created {} tasks, {} failed", created.len(), failed)
    })
}

fn serve(listen: SocketAddr, svc: AnnotationService, out: &mut Output<'_>) -> Result<(), Failure> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen).await.map_err(runtime)?;
        let addr = listener.local_addr().map_err(runtime)?;
        out.emit(&json!({"listening": format!("http://{addr}")}), || {
            format!("listening on http://{addr}")
        })?;
        out.out.flush().map_err(runtime)?;
        let app = crate::http::router(Arc::new(RwLock::new(svc)));
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(runtime)
    })
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main() -> ExitCode {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(io::stderr)
        .try_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
