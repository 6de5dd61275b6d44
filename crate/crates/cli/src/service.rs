//! HTTP job service.
//!
//! `POST /api/jobs` takes a multipart form with an `image` file and optional `spec`
//! (JSON), `mask` (repeatable PNG), `lines` (JSON) and `params` (JSON or TOML) parts,
//! and answers `202` with the job id. Jobs run on a bounded pool of blocking workers;
//! their records and artifacts live in memory and can be spilled to a directory.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use retarget_core::pipeline::{FailureKind, RetargetSpec};
use retarget_core::Raster;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::inputs::{decode_mask, parse_params, parse_polylines};
use crate::{execute, input_hash, saliency_png, Artifacts, JobInput};

const INDEX_HTML: &str = include_str!("../static/index.html");
const MAX_UPLOAD: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub input_hash: String,
    pub spec: RetargetSpec,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// `constraint`, `solver` or `other` when the job failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub workers: usize,
    pub spill_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { workers: 2, spill_dir: None }
    }
}

struct Job {
    record: JobRecord,
    artifacts: Option<Arc<Artifacts>>,
}

pub struct AppState {
    jobs: RwLock<HashMap<String, Arc<Job>>>,
    workers: Arc<Semaphore>,
    next_id: AtomicU64,
    spill_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            jobs: RwLock::new(HashMap::new()),
            workers: Arc::new(Semaphore::new(config.workers.max(1))),
            next_id: AtomicU64::new(1),
            spill_dir: config.spill_dir,
        })
    }

    /// Snapshot of a job record.
    pub fn record(&self, id: &str) -> Option<JobRecord> {
        self.get(id).map(|j| j.record.clone())
    }

    fn get(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.read().expect("job store poisoned").get(id).cloned()
    }

    fn update(&self, id: &str, f: impl FnOnce(&JobRecord) -> Job) {
        let mut jobs = self.jobs.write().expect("job store poisoned");
        if let Some(job) = jobs.get(id) {
            let next = f(&job.record);
            jobs.insert(id.to_string(), Arc::new(next));
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route("/api/jobs", post(create_job))
        .route("/api/jobs/{id}", get(job_status))
        .route("/api/jobs/{id}/output.png", get(job_output))
        .route("/api/jobs/{id}/density.png", get(job_density))
        .route("/api/saliency", post(saliency))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await?;
    Ok(())
}

fn bad_request(msg: impl std::fmt::Display) -> Response {
    (StatusCode::BAD_REQUEST, Json(serde_json::json!({ "error": msg.to_string() }))).into_response()
}

fn not_found() -> Response {
    (StatusCode::NOT_FOUND, Json(serde_json::json!({ "error": "no such job" }))).into_response()
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

struct Upload {
    image: Option<Bytes>,
    spec: Option<Bytes>,
    masks: Vec<Bytes>,
    lines: Option<Bytes>,
    params: Option<(Bytes, bool)>,
}

async fn read_form(mut form: Multipart) -> Result<Upload, Response> {
    let mut up = Upload { image: None, spec: None, masks: Vec::new(), lines: None, params: None };
    while let Some(field) = form.next_field().await.map_err(bad_request)? {
        let name = field.name().unwrap_or_default().to_string();
        let is_toml = field.file_name().is_some_and(|f| f.to_ascii_lowercase().ends_with(".toml"));
        let data = field.bytes().await.map_err(bad_request)?;
        match name.as_str() {
            "image" => up.image = Some(data),
            "spec" => up.spec = Some(data),
            "mask" | "masks" | "mask[]" => up.masks.push(data),
            "lines" => up.lines = Some(data),
            "params" => up.params = Some((data, is_toml)),
            other => return Err(bad_request(format!("unexpected form field `{other}`"))),
        }
    }
    Ok(up)
}

fn utf8(bytes: &Bytes, what: &str) -> Result<String, Response> {
    String::from_utf8(bytes.to_vec()).map_err(|_| bad_request(format!("{what} is not UTF-8")))
}

fn parse_upload(up: &Upload) -> Result<JobInput, Response> {
    let image = up.image.as_ref().ok_or_else(|| bad_request("missing `image` part"))?;
    let image = Raster::decode(image).map_err(|e| bad_request(format!("image: {e}")))?;
    let spec: RetargetSpec = match &up.spec {
        Some(s) => serde_json::from_slice(s).map_err(|e| bad_request(format!("spec: {e}")))?,
        None => RetargetSpec::default(),
    };
    let masks = up.masks.iter().map(|m| decode_mask(m)).collect::<Result<Vec<_>, _>>().map_err(|e| bad_request(format!("mask: {e:#}")))?;
    let polylines = match &up.lines {
        Some(l) => parse_polylines(&utf8(l, "lines")?).map_err(|e| bad_request(format!("lines: {e:#}")))?,
        None => Vec::new(),
    };
    let params = match &up.params {
        Some((p, is_toml)) => Some(parse_params(&utf8(p, "params")?, *is_toml).map_err(|e| bad_request(format!("params: {e:#}")))?),
        None => None,
    };
    Ok(JobInput { image, spec, masks, polylines, params })
}

async fn create_job(State(state): State<Arc<AppState>>, form: Multipart) -> Response {
    let up = match read_form(form).await {
        Ok(u) => u,
        Err(r) => return r,
    };
    let input = match parse_upload(&up) {
        Ok(i) => i,
        Err(r) => return r,
    };
    let spec_json = serde_json::to_vec(&input.spec).expect("spec serializes");
    let mut parts: Vec<&[u8]> = vec![up.image.as_deref().unwrap_or_default(), &spec_json];
    parts.extend(up.masks.iter().map(|m| m.as_ref()));
    parts.push(up.lines.as_deref().unwrap_or_default());
    parts.push(up.params.as_ref().map(|p| p.0.as_ref()).unwrap_or_default());
    let hash = input_hash(&parts);

    let id = format!("job-{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let record = JobRecord {
        id: id.clone(),
        input_hash: hash,
        spec: input.spec.clone(),
        status: JobStatus::Queued,
        diagnostics: None,
        error: None,
        failure: None,
        artifacts: Vec::new(),
    };
    state.jobs.write().expect("job store poisoned").insert(id.clone(), Arc::new(Job { record: record.clone(), artifacts: None }));
    tokio::spawn(run_job(state.clone(), id, input));
    (StatusCode::ACCEPTED, Json(record)).into_response()
}

async fn run_job(state: Arc<AppState>, id: String, input: JobInput) {
    let _permit = state.workers.clone().acquire_owned().await.expect("worker pool closed");
    state.update(&id, |r| Job { record: JobRecord { status: JobStatus::Running, ..r.clone() }, artifacts: None });
    let result = tokio::task::spawn_blocking(move || execute(&input, false)).await;
    match result {
        Ok(Ok(artifacts)) => {
            let mut paths = vec![format!("/api/jobs/{id}/output.png"), format!("/api/jobs/{id}/density.png")];
            if let Some(dir) = &state.spill_dir {
                match spill(dir, &id, &artifacts) {
                    Ok(mut files) => paths.append(&mut files),
                    Err(e) => eprintln!("{id}: spill failed: {e:#}"),
                }
            }
            let diagnostics = serde_json::to_value(&artifacts.diagnostics).ok();
            let artifacts = Arc::new(artifacts);
            state.update(&id, |r| Job {
                record: JobRecord { status: JobStatus::Done, diagnostics, artifacts: paths, ..r.clone() },
                artifacts: Some(artifacts),
            });
        }
        Ok(Err(e)) => {
            let failure = match e.kind() {
                FailureKind::Constraint => "constraint",
                FailureKind::Solver => "solver",
                FailureKind::Other => "other",
            };
            state.update(&id, |r| Job {
                record: JobRecord { status: JobStatus::Failed, error: Some(e.to_string()), failure: Some(failure.into()), ..r.clone() },
                artifacts: None,
            });
        }
        Err(join) => {
            state.update(&id, |r| Job {
                record: JobRecord { status: JobStatus::Failed, error: Some(format!("worker crashed: {join}")), failure: Some("other".into()), ..r.clone() },
                artifacts: None,
            });
        }
    }
}

fn spill(dir: &std::path::Path, id: &str, a: &Artifacts) -> anyhow::Result<Vec<String>> {
    let dir = dir.join(id);
    std::fs::create_dir_all(&dir)?;
    let files: [(&str, &[u8]); 4] = [
        ("output.png", &a.output_png),
        ("density.png", &a.density_png),
        ("diagnostics.json", a.diagnostics_json.as_bytes()),
        ("mesh.rtmesh", a.mesh_text.as_bytes()),
    ];
    let mut out = Vec::new();
    for (name, bytes) in files {
        let p = dir.join(name);
        std::fs::write(&p, bytes)?;
        out.push(p.display().to_string());
    }
    Ok(out)
}

async fn job_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.record(&id) {
        Some(r) => Json(r).into_response(),
        None => not_found(),
    }
}

fn artifact(state: &AppState, id: &str, pick: impl FnOnce(&Artifacts) -> Vec<u8>) -> Response {
    let Some(job) = state.get(id) else {
        return not_found();
    };
    match &job.artifacts {
        Some(a) => png(pick(a)),
        None => (StatusCode::CONFLICT, Json(serde_json::json!({ "error": "job has no output", "status": job.record.status })))
            .into_response(),
    }
}

async fn job_output(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    artifact(&state, &id, |a| a.output_png.clone())
}

async fn job_density(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    artifact(&state, &id, |a| a.density_png.clone())
}

async fn saliency(form: Multipart) -> Response {
    let up = match read_form(form).await {
        Ok(u) => u,
        Err(r) => return r,
    };
    let Some(bytes) = up.image else {
        return bad_request("missing `image` part");
    };
    let image = match Raster::decode(&bytes) {
        Ok(i) => i,
        Err(e) => return bad_request(format!("image: {e}")),
    };
    match tokio::task::spawn_blocking(move || saliency_png(&image)).await {
        Ok(Ok(bytes)) => png(bytes),
        Ok(Err(e)) => bad_request(e),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}
