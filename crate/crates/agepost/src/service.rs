//! Annotation tasks as a write-ahead-logged state machine.
//!
//! Every mutation is turned into a [`LogEntry`], appended to the log, and only
//! then applied through [`ServiceState::apply`]. Recovery feeds the same
//! entries through the same function, so a replayed state is identical to the
//! live one.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use agepost_core::pipeline::{
    finalize_annotation, rough_age_estimate, select_references_with_fallback, AnnotationRecord, FinalizeError,
    QueryItem, RecordStatus, ReferenceItem, SelectionError, SelectionPolicy,
};
use agepost_core::{
    posterior_from_events, AgeDistribution, AgeGrid, ComparisonEvent, CredibleInterval, LogisticModel, Outcome,
    PosteriorError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{EntryKind, EventLog, LogEntry, LogError, SNAPSHOT_INTERVAL};

/// Milliseconds since the Unix epoch.
pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as i64)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub grid: AgeGrid,
    pub model: LogisticModel,
    pub policy: SelectionPolicy,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            grid: AgeGrid::DEFAULT,
            model: LogisticModel::default(),
            policy: SelectionPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Open,
    Finalized,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub query: QueryItem,
    pub status: TaskStatus,
    pub events: Vec<ComparisonEvent>,
    pub pending_refs: VecDeque<ReferenceItem>,
    pub created_at: i64,
    pub updated_at: i64,
    pub record: Option<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ServiceState {
    pub seq: u64,
    pub tasks: BTreeMap<String, AnnotationTask>,
    /// Task ids in creation order.
    pub order: Vec<String>,
    /// Query id → task id.
    pub queries: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskCreated {
    task_id: String,
    query: QueryItem,
    pending_refs: Vec<ReferenceItem>,
    at: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ComparisonSubmitted {
    task_id: String,
    event: ComparisonEvent,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskClosed {
    task_id: String,
    forced: bool,
    record: AnnotationRecord,
    at: i64,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no task with id {0}")]
    UnknownTask(String),
    #[error("task {task_id} is {status:?}")]
    TaskClosed { task_id: String, status: TaskStatus },
    #[error("reference {got} is not next in the queue (expected {expected:?})")]
    OutOfOrderReference { expected: Option<String>, got: String },
    #[error("reference {0} does not belong to this task")]
    UnknownReference(String),
    #[error("query {query_id} already has task {task_id}")]
    DuplicateQuery { query_id: String, task_id: String },
    #[error(transparent)]
    InsufficientPool(SelectionError),
    #[error("{remaining} comparisons are still pending; pass force to finalize early")]
    QueueNotExhausted { remaining: usize },
    #[error("task has no comparisons to finalize")]
    NoEvidence,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("evidence is degenerate: {0}")]
    DegenerateEvidence(String),
    #[error(transparent)]
    Io(#[from] LogError),
    #[error("event log does not replay: {0}")]
    Corrupt(String),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownTask(_) => "unknown_task",
            ServiceError::TaskClosed { .. } => "task_closed",
            ServiceError::OutOfOrderReference { .. } => "out_of_order_reference",
            ServiceError::UnknownReference(_) => "unknown_reference",
            ServiceError::DuplicateQuery { .. } => "duplicate_query",
            ServiceError::InsufficientPool(_) => "insufficient_pool",
            ServiceError::QueueNotExhausted { .. } => "queue_not_exhausted",
            ServiceError::NoEvidence => "no_evidence",
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::DegenerateEvidence(_) => "degenerate_evidence",
            ServiceError::Io(_) => "io_error",
            ServiceError::Corrupt(_) => "corrupt_log",
        }
    }
}

impl From<PosteriorError> for ServiceError {
    fn from(e: PosteriorError) -> Self {
        ServiceError::DegenerateEvidence(e.to_string())
    }
}

/// Posterior summary returned after each judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub task_id: String,
    pub posterior: AgeDistribution,
    pub mode: u32,
    pub ci90: CredibleInterval,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextComparison {
    pub exhausted: bool,
    pub reference: Option<ReferenceItem>,
}

/// Everything a client needs to render a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub query: QueryItem,
    pub status: TaskStatus,
    pub events: Vec<ComparisonEvent>,
    pub remaining: usize,
    pub next_reference: Option<ReferenceItem>,
    pub posterior: AgeDistribution,
    pub mode: u32,
    pub ci90: CredibleInterval,
    pub created_at: i64,
    pub updated_at: i64,
    pub record: Option<AnnotationRecord>,
}

fn decode<T: for<'de> Deserialize<'de>>(entry: &LogEntry) -> Result<T, ServiceError> {
    serde_json::from_value(entry.payload.clone())
        .map_err(|e| ServiceError::Corrupt(format!("seq {}: bad {:?} payload: {e}", entry.seq, entry.kind)))
}

fn corrupt(entry: &LogEntry, what: impl std::fmt::Display) -> ServiceError {
    ServiceError::Corrupt(format!("seq {}: {what}", entry.seq))
}

impl ServiceState {
    fn open_task(&self, task_id: &str) -> Result<&AnnotationTask, ServiceError> {
        let task = self
            .tasks
            .get(task_id)
            .ok_or_else(|| ServiceError::UnknownTask(task_id.to_string()))?;
        if task.status != TaskStatus::Open {
            return Err(ServiceError::TaskClosed {
                task_id: task_id.to_string(),
                status: task.status,
            });
        }
        Ok(task)
    }

    /// Applies one log entry. Finalization entries are checked against a
    /// fresh recomputation of the record from the task's events.
    pub fn apply(&mut self, entry: &LogEntry, config: &ServiceConfig) -> Result<(), ServiceError> {
        if entry.seq != self.seq + 1 {
            return Err(corrupt(entry, format!("expected seq {}", self.seq + 1)));
        }
        match entry.kind {
            EntryKind::TaskCreated => {
                let p: TaskCreated = decode(entry)?;
                if self.tasks.contains_key(&p.task_id) || self.queries.contains_key(&p.query.id) {
                    return Err(corrupt(
                        entry,
                        format!("task {} or its query already exists", p.task_id),
                    ));
                }
                self.queries.insert(p.query.id.clone(), p.task_id.clone());
                self.order.push(p.task_id.clone());
                self.tasks.insert(
                    p.task_id.clone(),
                    AnnotationTask {
                        task_id: p.task_id,
                        query: p.query,
                        status: TaskStatus::Open,
                        events: Vec::new(),
                        pending_refs: p.pending_refs.into(),
                        created_at: p.at,
                        updated_at: p.at,
                        record: None,
                    },
                );
            }
            EntryKind::ComparisonSubmitted => {
                let p: ComparisonSubmitted = decode(entry)?;
                self.open_task(&p.task_id).map_err(|e| corrupt(entry, e))?;
                let task = self.tasks.get_mut(&p.task_id).expect("checked above");
                if task.pending_refs.front().map(|r| &r.id) != Some(&p.event.ref_id) {
                    return Err(corrupt(entry, format!("{} is not the queue head", p.event.ref_id)));
                }
                task.pending_refs.pop_front();
                task.updated_at = p.event.timestamp;
                task.events.push(p.event);
            }
            EntryKind::TaskFinalized | EntryKind::TaskDiscarded => {
                let p: TaskClosed = decode(entry)?;
                let task = self.open_task(&p.task_id).map_err(|e| corrupt(entry, e))?;
                let prior = AgeDistribution::uniform(config.grid);
                let record = finalize_annotation(task.query.id.clone(), task.events.clone(), &config.model, &prior)
                    .map_err(|e| corrupt(entry, e))?;
                if record != p.record {
                    return Err(corrupt(entry, "logged record differs from recomputation"));
                }
                let status = match (entry.kind, record.status) {
                    (EntryKind::TaskFinalized, RecordStatus::Labelled) => TaskStatus::Finalized,
                    (EntryKind::TaskDiscarded, RecordStatus::Discarded) => TaskStatus::Discarded,
                    _ => return Err(corrupt(entry, "entry kind does not match record status")),
                };
                if !p.forced && !task.pending_refs.is_empty() {
                    return Err(corrupt(entry, "unforced finalization with pending references"));
                }
                let task = self.tasks.get_mut(&p.task_id).expect("checked above");
                task.status = status;
                task.record = Some(record);
                task.updated_at = p.at;
            }
        }
        self.seq = entry.seq;
        Ok(())
    }

    /// Rebuilds state from a starting point and the entries that follow it.
    pub fn replay(
        mut self,
        entries: impl IntoIterator<Item = LogEntry>,
        config: &ServiceConfig,
    ) -> Result<Self, ServiceError> {
        for e in entries {
            self.apply(&e, config)?;
        }
        Ok(self)
    }
}

pub struct AnnotationService {
    config: ServiceConfig,
    prior: AgeDistribution,
    pool: Vec<ReferenceItem>,
    state: ServiceState,
    log: Option<EventLog>,
    clock: Clock,
}

impl std::fmt::Debug for AnnotationService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationService")
            .field("config", &self.config)
            .field("pool", &self.pool.len())
            .field("seq", &self.state.seq)
            .field("log", &self.log.as_ref().map(EventLog::path))
            .finish()
    }
}

impl AnnotationService {
    /// Service without persistence.
    pub fn in_memory(config: ServiceConfig, pool: Vec<ReferenceItem>, clock: Clock) -> Self {
        Self {
            prior: AgeDistribution::uniform(config.grid),
            config,
            pool,
            state: ServiceState::default(),
            log: None,
            clock,
        }
    }

    /// Opens the log at `path`, restores the latest snapshot and replays the
    /// remaining entries.
    pub fn open(
        config: ServiceConfig,
        pool: Vec<ReferenceItem>,
        path: &Path,
        sync: bool,
        clock: Clock,
    ) -> Result<Self, ServiceError> {
        let (log, recovered) = EventLog::open(path, sync)?;
        if recovered.truncated_tail {
            tracing::warn!(log = %path.display(), "dropped an incomplete entry at the end of the event log");
        }
        let start = match recovered.snapshot {
            Some((seq, value)) => {
                let state: ServiceState =
                    serde_json::from_value(value).map_err(|e| ServiceError::Corrupt(format!("snapshot: {e}")))?;
                if state.seq != seq {
                    return Err(ServiceError::Corrupt(format!(
                        "snapshot claims seq {seq} but holds state at {}",
                        state.seq
                    )));
                }
                state
            }
            None => ServiceState::default(),
        };
        let state = start.replay(recovered.entries, &config)?;
        let mut svc = Self::in_memory(config, pool, clock);
        svc.state = state;
        svc.log = Some(log);
        Ok(svc)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn state(&self) -> &ServiceState {
        &self.state
    }

    pub fn pool(&self) -> &[ReferenceItem] {
        &self.pool
    }

    fn commit(&mut self, kind: EntryKind, payload: impl Serialize) -> Result<(), ServiceError> {
        let payload = serde_json::to_value(payload).expect("payloads always serialize");
        let entry = match &mut self.log {
            Some(log) => log.append(kind, payload)?,
            None => LogEntry {
                seq: self.state.seq + 1,
                kind,
                payload,
            },
        };
        self.state.apply(&entry, &self.config)?;
        if let Some(log) = &self.log {
            if entry.seq % SNAPSHOT_INTERVAL == 0 {
                if let Err(e) = log.write_snapshot(entry.seq, &self.state) {
                    tracing::warn!(error = %e, "snapshot failed; the log alone still recovers state");
                }
            }
        }
        Ok(())
    }

    fn summary(&self, task: &AnnotationTask) -> Result<(AgeDistribution, u32, CredibleInterval), ServiceError> {
        let posterior = posterior_from_events(&self.config.model, &self.prior, &task.events)?;
        let mode = posterior.mode();
        let ci = posterior.confidence_interval(agepost_core::distribution::OUTLIER_LEVEL);
        Ok((posterior, mode, ci))
    }

    fn task(&self, task_id: &str) -> Result<&AnnotationTask, ServiceError> {
        self.state
            .tasks
            .get(task_id)
            .ok_or_else(|| ServiceError::UnknownTask(task_id.to_string()))
    }

    /// Opens a task with references drawn once, up front, around the query's
    /// rough age. The selection uses generator stream `n` for the n-th task.
    pub fn create_task(&mut self, query: QueryItem) -> Result<TaskView, ServiceError> {
        if query.id.is_empty() {
            return Err(ServiceError::InvalidRequest("query id must not be empty".into()));
        }
        if let Some(task_id) = self.state.queries.get(&query.id) {
            return Err(ServiceError::DuplicateQuery {
                query_id: query.id,
                task_id: task_id.clone(),
            });
        }
        let n = self.state.order.len() as u64 + 1;
        let policy = SelectionPolicy {
            adaptive: false,
            ..self.config.policy.clone()
        };
        let rough = self
            .config
            .grid
            .clamp(rough_age_estimate(&query, self.config.grid.midpoint()) as i64);
        let mut rng = policy.rng(n);
        let (refs, relaxation) = select_references_with_fallback(&query, &self.pool, &policy, rough, &mut rng)
            .map_err(|e| match e {
                SelectionError::EmptyPolicy => ServiceError::InvalidRequest(e.to_string()),
                e => ServiceError::InsufficientPool(e),
            })?;
        let task_id = format!("task-{n:06}");
        tracing::debug!(%task_id, query = %query.id, ?relaxation, "task created");
        self.commit(
            EntryKind::TaskCreated,
            TaskCreated {
                task_id: task_id.clone(),
                query,
                pending_refs: refs,
                at: (self.clock)(),
            },
        )?;
        self.get_task(&task_id)
    }

    pub fn get_task(&self, task_id: &str) -> Result<TaskView, ServiceError> {
        let task = self.task(task_id)?;
        let (posterior, mode, ci90) = self.summary(task)?;
        Ok(TaskView {
            task_id: task.task_id.clone(),
            query: task.query.clone(),
            status: task.status,
            events: task.events.clone(),
            remaining: task.pending_refs.len(),
            next_reference: task.pending_refs.front().cloned(),
            posterior,
            mode,
            ci90,
            created_at: task.created_at,
            updated_at: task.updated_at,
            record: task.record.clone(),
        })
    }

    /// Head of the queue, without consuming it.
    pub fn next_comparison(&self, task_id: &str) -> Result<NextComparison, ServiceError> {
        let task = self.state.open_task(task_id)?;
        let reference = task.pending_refs.front().cloned();
        Ok(NextComparison {
            exhausted: reference.is_none(),
            reference,
        })
    }

    pub fn submit_comparison(
        &mut self,
        task_id: &str,
        ref_id: &str,
        outcome: Outcome,
        annotator_id: &str,
    ) -> Result<SubmitResponse, ServiceError> {
        let task = self.state.open_task(task_id)?;
        let head = task.pending_refs.front();
        let reference = match head {
            Some(r) if r.id == ref_id => r.clone(),
            _ => {
                let known =
                    task.events.iter().any(|e| e.ref_id == ref_id) || task.pending_refs.iter().any(|r| r.id == ref_id);
                return Err(if known {
                    ServiceError::OutOfOrderReference {
                        expected: head.map(|r| r.id.clone()),
                        got: ref_id.to_string(),
                    }
                } else {
                    ServiceError::UnknownReference(ref_id.to_string())
                });
            }
        };
        let event = ComparisonEvent::new(reference.id, reference.age, outcome, annotator_id, (self.clock)());
        self.commit(
            EntryKind::ComparisonSubmitted,
            ComparisonSubmitted {
                task_id: task_id.to_string(),
                event,
            },
        )?;
        let task = self.task(task_id)?;
        let (posterior, mode, ci90) = self.summary(task)?;
        Ok(SubmitResponse {
            task_id: task_id.to_string(),
            posterior,
            mode,
            ci90,
            remaining: task.pending_refs.len(),
        })
    }

    /// Seals the task. Without `force` every queued reference must have been
    /// judged.
    pub fn finalize_task(&mut self, task_id: &str, force: bool) -> Result<AnnotationRecord, ServiceError> {
        let task = self.state.open_task(task_id)?;
        if !force && !task.pending_refs.is_empty() {
            return Err(ServiceError::QueueNotExhausted {
                remaining: task.pending_refs.len(),
            });
        }
        let record = finalize_annotation(
            task.query.id.clone(),
            task.events.clone(),
            &self.config.model,
            &self.prior,
        )
        .map_err(|e| match e {
            FinalizeError::NoEvidence => ServiceError::NoEvidence,
            FinalizeError::Posterior(p) => p.into(),
        })?;
        let kind = if record.is_discarded() {
            EntryKind::TaskDiscarded
        } else {
            EntryKind::TaskFinalized
        };
        self.commit(
            kind,
            TaskClosed {
                task_id: task_id.to_string(),
                forced: force,
                record: record.clone(),
                at: (self.clock)(),
            },
        )?;
        Ok(record)
    }

    /// Sealed records in task creation order.
    pub fn export(&self, include_discarded: bool) -> Vec<&AnnotationRecord> {
        self.state
            .order
            .iter()
            .filter_map(|id| self.state.tasks[id].record.as_ref())
            .filter(|r| include_discarded || !r.is_discarded())
            .collect()
    }

    pub fn export_jsonl<W: Write>(&self, mut writer: W, include_discarded: bool) -> std::io::Result<()> {
        for record in self.export(include_discarded) {
            serde_json::to_writer(&mut writer, record)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }
}
