//! HTTP routes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use ufce_core::bench::{run_rq1, run_rq2, run_rq3, BenchConfig, ExperimentReport};

use crate::error::ApiError;
use crate::explain::{handle_explain, named_pairs, summary, DatasetSummary, ExplainRequest, ExplainResponse, NamedPair};
use crate::registry::Registry;

pub struct AppState {
    pub registry: Registry,
    jobs: Mutex<BTreeMap<u64, Job>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(registry: Registry) -> Arc<Self> {
        Arc::new(AppState { registry, jobs: Mutex::new(BTreeMap::new()), next_job: AtomicU64::new(1) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Job {
    Running,
    Done { report: Box<ExperimentReport> },
    Failed { error: String },
}

/// Routes for the JSON API, plus static files from `static_dir` at `/` if given.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}/summary", get(dataset_summary))
        .route("/datasets/{id}/mi-pairs", get(mi_pairs))
        .route("/explain", post(explain))
        .route("/bench/{rq}", post(start_bench))
        .route("/jobs/{id}", get(job_status))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> Result<R, ApiError> + Send + 'static) -> Result<R, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(state.registry.list())
}

async fn dataset_summary(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<DatasetSummary>, ApiError> {
    blocking(move || state.registry.get(&id).map(|a| summary(&a))).await.map(Json)
}

async fn mi_pairs(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Vec<NamedPair>>, ApiError> {
    blocking(move || state.registry.get(&id).map(|a| named_pairs(&a))).await.map(Json)
}

async fn explain(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ExplainRequest>, JsonRejection>,
) -> Result<Json<ExplainResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::Unprocessable(e.body_text()))?;
    blocking(move || {
        let art = state.registry.get(&req.dataset)?;
        handle_explain(&art, &req)
    })
    .await
    .map(Json)
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchRequest {
    /// Dataset id; the multi-dataset run uses every dataset when absent.
    pub dataset: Option<String>,
    pub seed: u64,
    pub pool_size: Option<usize>,
    pub repetitions: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobCreated {
    pub job_id: u64,
}

async fn start_bench(
    State(state): State<Arc<AppState>>,
    Path(rq): Path<String>,
    body: Result<Json<BenchRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    if !matches!(rq.as_str(), "rq1" | "rq2" | "rq3") {
        return Err(ApiError::NotFound(format!("unknown experiment `{rq}`")));
    }
    let Json(req) = body.map_err(|e| ApiError::Unprocessable(e.body_text()))?;
    let ids = match (&req.dataset, rq.as_str()) {
        (Some(id), _) => {
            if !state.registry.contains(id) {
                return Err(ApiError::NotFound(format!("unknown dataset `{id}`")));
            }
            vec![id.clone()]
        }
        (None, "rq3") => state.registry.list(),
        (None, _) => return Err(ApiError::Unprocessable("`dataset` is required".into())),
    };
    let mut config = BenchConfig::default();
    if let Some(n) = req.pool_size {
        config.pool_size = n;
    }
    if let Some(n) = req.repetitions {
        config.repetitions = n;
    }
    let id = state.next_job.fetch_add(1, Ordering::Relaxed);
    state.jobs.lock().expect("jobs lock").insert(id, Job::Running);
    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = run_experiment(&worker.registry, &rq, &ids, &config, req.seed);
        let job = match outcome {
            Ok(report) => Job::Done { report: Box::new(report) },
            Err(e) => Job::Failed { error: e.to_string() },
        };
        worker.jobs.lock().expect("jobs lock").insert(id, job);
    });
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id: id })))
}

/// Runs one experiment over datasets from the registry.
pub fn run_experiment(registry: &Registry, rq: &str, ids: &[String], config: &BenchConfig, seed: u64) -> Result<ExperimentReport, ApiError> {
    let mut datasets = Vec::new();
    for id in ids {
        datasets.push((id.clone(), registry.dataset(id)?));
    }
    let result = match rq {
        "rq1" => run_rq1(&datasets[0].0, &datasets[0].1, config, seed),
        "rq2" => run_rq2(&datasets[0].0, &datasets[0].1, config, seed),
        _ => run_rq3(&datasets, config, seed),
    };
    result.map(|(report, _)| report).map_err(ApiError::from)
}

async fn job_status(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<Job>, ApiError> {
    state
        .jobs
        .lock()
        .expect("jobs lock")
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))
}
