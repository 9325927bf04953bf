//! HTTP API over a trained bundle.
//!
//! Scenario runs are queued FIFO and executed on a fixed pool of worker
//! threads; handlers only touch the run registry and the result files.
//! Results are content-addressed by scenario hash under `runs/results/`,
//! run records live under `runs/records/`, both written atomically.
//!
//! | route | |
//! |-------|--|
//! | `POST /api/scenarios[?reuse=true]` | queue a run: 202, 400 field errors, 409 prior run |
//! | `GET /api/scenarios` | all run records |
//! | `GET /api/scenarios/{id}` | one run record |
//! | `GET /api/scenarios/{id}/result` | result JSON: 425 not ready, 500 failed |
//! | `GET /api/npis` | trained NPI names and historical level ranges |
//! | `GET /api/baseline` | historical replay for comparison |

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use log::{info, warn};
use pansim_core::scenario::{FieldError, Scenario};
use pansim_core::Date;
use serde::{Deserialize, Serialize};
use tokio::sync::OnceCell;

use crate::artifacts::{write_atomic, Artifacts, DataDir};
use crate::error::{Error, Result};
use crate::workflow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub scenario: Scenario,
    pub status: RunStatus,
    pub config_hash: String,
    /// Result location relative to the data directory, set once done.
    pub result: Option<String>,
    pub error: Option<String>,
    pub created: DateTime<Utc>,
    pub started: Option<DateTime<Utc>>,
    pub finished: Option<DateTime<Utc>>,
}

#[derive(Default)]
struct Registry {
    records: BTreeMap<String, RunRecord>,
    queue: VecDeque<String>,
    next_id: u64,
}

struct Shared {
    art: Arc<Artifacts>,
    dirs: DataDir,
    registry: Mutex<Registry>,
    wake: Condvar,
    stop: AtomicBool,
    baseline: OnceCell<std::result::Result<Bytes, String>>,
}

/// Handle on the service state; clones share one registry and worker pool.
#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

fn records_dir(d: &DataDir) -> PathBuf {
    d.runs().join("records")
}

fn results_dir(d: &DataDir) -> PathBuf {
    d.runs().join("results")
}

fn result_rel(hash: &str) -> String {
    format!("runs/results/{hash}.json")
}

impl AppState {
    /// Loads persisted records, re-queues unfinished ones and starts
    /// `workers` threads.
    pub fn start(art: Artifacts, dirs: DataDir, workers: usize) -> Result<AppState> {
        for d in [records_dir(&dirs), results_dir(&dirs)] {
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let mut reg = Registry::default();
        let rdir = records_dir(&dirs);
        let entries = std::fs::read_dir(&rdir).map_err(|e| Error::io(&rdir, e))?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let rec: RunRecord = match std::fs::read(&path).map(|b| serde_json::from_slice(&b)) {
                Ok(Ok(r)) => r,
                _ => {
                    warn!("skipping unreadable run record {}", path.display());
                    continue;
                }
            };
            if let Some(n) = rec.id.strip_prefix("run-").and_then(|n| n.parse::<u64>().ok()) {
                reg.next_id = reg.next_id.max(n + 1);
            }
            reg.records.insert(rec.id.clone(), rec);
        }
        // runs interrupted by a shutdown start over
        let mut pending: Vec<&mut RunRecord> = reg
            .records
            .values_mut()
            .filter(|r| matches!(r.status, RunStatus::Queued | RunStatus::Running))
            .collect();
        pending.sort_by_key(|r| r.created);
        let mut requeue = Vec::new();
        for r in pending {
            r.status = RunStatus::Queued;
            r.started = None;
            persist(&dirs, r)?;
            requeue.push(r.id.clone());
        }
        reg.queue.extend(requeue);

        let shared = Arc::new(Shared {
            art: Arc::new(art),
            dirs,
            registry: Mutex::new(reg),
            wake: Condvar::new(),
            stop: AtomicBool::new(false),
            baseline: OnceCell::new(),
        });
        for i in 0..workers.max(1) {
            let s = Arc::clone(&shared);
            std::thread::Builder::new()
                .name(format!("pansim-worker-{i}"))
                .spawn(move || worker(&s))
                .map_err(|e| Error::io("worker thread", e))?;
        }
        Ok(AppState { shared })
    }

    /// Asks the workers to exit once their current run finishes.
    pub fn shutdown(&self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.shared.wake.notify_all();
    }

    pub fn record(&self, id: &str) -> Option<RunRecord> {
        self.shared.registry.lock().expect("registry lock").records.get(id).cloned()
    }
}

fn persist(dirs: &DataDir, rec: &RunRecord) -> Result<()> {
    write_atomic(&records_dir(dirs).join(format!("{}.json", rec.id)), &serde_json::to_vec_pretty(rec)?)
}

/// Applies a status transition; only queued→running→{done, failed} exist.
fn transition(s: &Shared, id: &str, f: impl FnOnce(&mut RunRecord)) {
    let mut reg = s.registry.lock().expect("registry lock");
    let rec = reg.records.get_mut(id).expect("queued ids have records");
    let before = rec.status;
    f(rec);
    debug_assert!(matches!(
        (before, rec.status),
        (RunStatus::Queued, RunStatus::Running) | (RunStatus::Running, RunStatus::Done | RunStatus::Failed)
    ));
    if let Err(e) = persist(&s.dirs, rec) {
        warn!("could not persist run {id}: {e}");
    }
}

fn worker(s: &Shared) {
    loop {
        let id = {
            let mut reg = s.registry.lock().expect("registry lock");
            loop {
                if s.stop.load(Ordering::SeqCst) {
                    return;
                }
                if let Some(id) = reg.queue.pop_front() {
                    break id;
                }
                reg = s.wake.wait(reg).expect("registry lock");
            }
        };
        let (scenario, hash) = {
            let reg = s.registry.lock().expect("registry lock");
            let r = &reg.records[&id];
            (r.scenario.clone(), r.config_hash.clone())
        };
        transition(s, &id, |r| {
            r.status = RunStatus::Running;
            r.started = Some(Utc::now());
        });
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(s, &scenario, &hash)))
            .unwrap_or_else(|_| Err("run panicked".to_string()));
        match &outcome {
            Ok(()) => info!("run {id} done"),
            Err(e) => warn!("run {id} failed: {e}"),
        }
        transition(s, &id, |r| {
            r.finished = Some(Utc::now());
            match outcome {
                Ok(()) => {
                    r.status = RunStatus::Done;
                    r.result = Some(result_rel(&hash));
                }
                Err(e) => {
                    r.status = RunStatus::Failed;
                    r.error = Some(e);
                }
            }
        });
    }
}

/// Computes the result unless a committed file for the hash exists.
fn execute(s: &Shared, scenario: &Scenario, hash: &str) -> std::result::Result<(), String> {
    let path = s.dirs.root.join(result_rel(hash));
    if path.exists() {
        return Ok(());
    }
    let result = workflow::run(scenario, &s.art).map_err(|e| e.to_string())?;
    let bytes = serde_json::to_vec(&result).map_err(|e| e.to_string())?;
    write_atomic(&path, &bytes).map_err(|e| e.to_string())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/scenarios", get(list_runs).post(submit))
        .route("/api/scenarios/{id}", get(get_run))
        .route("/api/scenarios/{id}/result", get(get_result))
        .route("/api/npis", get(npis))
        .route("/api/baseline", get(baseline))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    errors: Vec<FieldError>,
}

fn field_errors(status: StatusCode, errors: Vec<FieldError>) -> Response {
    (status, Json(ErrorBody { errors })).into_response()
}

fn message(status: StatusCode, field: &str, msg: impl Into<String>) -> Response {
    field_errors(
        status,
        vec![FieldError {
            field: field.into(),
            message: msg.into(),
        }],
    )
}

/// Maps a serde failure onto the offending field path.
fn decode_error(e: serde_path_to_error::Error<serde_json::Error>) -> FieldError {
    let mut field = e.path().to_string();
    let msg = e.inner().to_string();
    let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
    let quoted = msg.split('`').nth(1).map(str::to_string);
    if msg.starts_with("missing field") {
        if let Some(name) = quoted {
            field = if field == "." { name } else { format!("{field}.{name}") };
        }
    }
    if field == "." {
        field = "body".into();
    }
    FieldError { field, message: msg }
}

pub fn parse_scenario(body: &[u8]) -> std::result::Result<Scenario, Vec<FieldError>> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| vec![decode_error(e)])
}

#[derive(Debug, Default, Deserialize)]
struct SubmitQuery {
    #[serde(default)]
    reuse: bool,
}

#[derive(Debug, Serialize)]
struct Accepted {
    id: String,
    status: RunStatus,
    config_hash: String,
}

async fn submit(State(st): State<AppState>, Query(q): Query<SubmitQuery>, body: Bytes) -> Response {
    let scenario = match parse_scenario(&body) {
        Ok(s) => s,
        Err(errs) => return field_errors(StatusCode::BAD_REQUEST, errs),
    };
    let p = &st.shared.art.pipeline;
    if let Err(errs) = scenario.validate(&p.features.npi_names, p.window_start, p.window_end) {
        return field_errors(StatusCode::BAD_REQUEST, errs);
    }
    let hash = workflow::scenario_hash(&scenario, &st.shared.art);
    let s = &st.shared;
    let mut reg = s.registry.lock().expect("registry lock");
    if q.reuse {
        let prior = reg
            .records
            .values()
            .filter(|r| r.config_hash == hash && r.status != RunStatus::Failed)
            .max_by_key(|r| r.created)
            .cloned();
        if let Some(prior) = prior {
            return (StatusCode::CONFLICT, Json(prior)).into_response();
        }
    }
    let id = format!("run-{:06}", reg.next_id);
    reg.next_id += 1;
    let rec = RunRecord {
        id: id.clone(),
        scenario,
        status: RunStatus::Queued,
        config_hash: hash.clone(),
        result: None,
        error: None,
        created: Utc::now(),
        started: None,
        finished: None,
    };
    if let Err(e) = persist(&s.dirs, &rec) {
        return message(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string());
    }
    reg.records.insert(id.clone(), rec);
    reg.queue.push_back(id.clone());
    drop(reg);
    s.wake.notify_one();
    let location = format!("/api/scenarios/{id}");
    (
        StatusCode::ACCEPTED,
        [(header::LOCATION, location)],
        Json(Accepted {
            id,
            status: RunStatus::Queued,
            config_hash: hash,
        }),
    )
        .into_response()
}

async fn list_runs(State(st): State<AppState>) -> Json<Vec<RunRecord>> {
    let reg = st.shared.registry.lock().expect("registry lock");
    Json(reg.records.values().cloned().collect())
}

fn unknown_run(id: &str) -> Response {
    message(StatusCode::NOT_FOUND, "id", format!("unknown run '{id}'"))
}

async fn get_run(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match st.record(&id) {
        Some(r) => Json(r).into_response(),
        None => unknown_run(&id),
    }
}

fn json_bytes(bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

async fn get_result(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(rec) = st.record(&id) else {
        return unknown_run(&id);
    };
    match rec.status {
        RunStatus::Queued | RunStatus::Running => (StatusCode::TOO_EARLY, Json(rec)).into_response(),
        RunStatus::Failed => (StatusCode::INTERNAL_SERVER_ERROR, Json(rec)).into_response(),
        RunStatus::Done => {
            let rel = rec.result.expect("done runs have a result");
            let path: PathBuf = st.shared.dirs.root.join(Path::new(&rel));
            match tokio::fs::read(&path).await {
                Ok(b) => json_bytes(Bytes::from(b)),
                Err(e) => message(StatusCode::INTERNAL_SERVER_ERROR, "result", format!("{}: {e}", path.display())),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpiInfo {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpiCatalog {
    pub window_start: Date,
    pub window_end: Date,
    pub npis: Vec<NpiInfo>,
}

pub fn npi_catalog(art: &Artifacts) -> Result<NpiCatalog> {
    let p = &art.pipeline;
    let hist = p.inputs.npis.window(p.window_start, p.window_end)?;
    let mut npis = Vec::new();
    for name in &p.features.npi_names {
        let col = hist.levels().column(hist.index_of_npi(name)?);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        npis.push(NpiInfo {
            name: name.clone(),
            min,
            max,
        });
    }
    Ok(NpiCatalog {
        window_start: p.window_start,
        window_end: p.window_end,
        npis,
    })
}

async fn npis(State(st): State<AppState>) -> Response {
    match npi_catalog(&st.shared.art) {
        Ok(c) => Json(c).into_response(),
        Err(e) => message(StatusCode::INTERNAL_SERVER_ERROR, "npis", e.to_string()),
    }
}

async fn baseline(State(st): State<AppState>) -> Response {
    let s = Arc::clone(&st.shared);
    let out = st
        .shared
        .baseline
        .get_or_init(|| async move {
            tokio::task::spawn_blocking(move || {
                let r = workflow::run(&Scenario::historical("baseline"), &s.art).map_err(|e| e.to_string())?;
                serde_json::to_vec(&r).map(Bytes::from).map_err(|e| e.to_string())
            })
            .await
            .unwrap_or_else(|e| Err(e.to_string()))
        })
        .await;
    match out {
        Ok(b) => json_bytes(b.clone()),
        Err(e) => message(StatusCode::INTERNAL_SERVER_ERROR, "baseline", e.clone()),
    }
}

/// Binds and serves until Ctrl-C.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    info!("listening on http://{addr}");
    let app = router(state.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    state.shutdown();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_errors_name_fields() {
        let cases = [
            (r#"{"remove":[]}"#, "kind"),
            (r#"{"kind":"take-one-out","colour":1}"#, "colour"),
            (r#"{"kind":"sideways"}"#, "kind"),
            (r#"{"kind":"custom-npis","overrides":[{"npi":"x","level":"high"}]}"#, "overrides[0].level"),
            (r#"{"kind":"forecast","end":"2021-13-01"}"#, "end"),
            ("not json", "body"),
        ];
        for (body, field) in cases {
            let errs = parse_scenario(body.as_bytes()).unwrap_err();
            assert_eq!(errs[0].field, field, "{body}: {errs:?}");
        }
    }
}
