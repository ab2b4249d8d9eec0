//! HTTP service for human evaluation: serves clips, plans and rubrics to the
//! browser UI and appends submitted ratings to `ratings/ratings.jsonl`.
//!
//! Rater-facing payloads carry opaque task ids only; system tags stay on the
//! server and are joined onto ratings at submission time.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower_http::services::ServeDir;

use crate::compiler::AnimationClip;
use crate::corpus::Corpus;
use crate::eval::{self, BpqGroup, BpqLabel, RatingRecord, TargetKind, ORACLE_TAG};
use crate::high_level::HighLevelPlan;
use crate::run::{run_dirs, RunError, RunManifest, DEFAULT_ANNOTATION_SEED};

const RUBRICS: &str = include_str!("../data/rubrics.json");
const SKELETON: &str = include_str!("../data/skeleton.json");
pub const RATINGS_FILE: &str = "ratings/ratings.jsonl";

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Built UI assets served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Rater roster. When set, each task goes to a fixed number of raters
    /// from it; otherwise every rater sees every task.
    pub raters: Vec<String>,
    /// Overrides the seed recorded in the manifest.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub target_kind: TargetKind,
    pub motion_id: u32,
    /// Path relative to the served root.
    pub artifact: String,
    pub system_tag: String,
    pub assigned_raters: Vec<String>,
    pub rubric: TargetKind,
}

/// What a rater sees of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterTask {
    pub task_id: String,
    pub target_kind: TargetKind,
    pub motion_id: u32,
    pub instruction: String,
    pub rubric_url: String,
    pub artifact_url: String,
    pub done: bool,
}

/// Body of `POST /ratings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub task_id: String,
    pub rater_id: String,
    pub score: i64,
    #[serde(default)]
    pub bpq: Option<BTreeMap<BpqGroup, BpqLabel>>,
    #[serde(default)]
    pub comment: String,
}

pub struct ServiceState {
    root: PathBuf,
    tasks: Vec<AnnotationTask>,
    index: HashMap<String, usize>,
    instructions: BTreeMap<u32, String>,
    seed: u64,
    store: Mutex<()>,
    ui_dir: Option<PathBuf>,
}

fn task_id(seed: u64, kind: TargetKind, artifact: &str) -> String {
    let digest = Sha256::digest(format!("{seed}:{kind}:{artifact}").as_bytes());
    hex::encode(&digest[..8])
}

fn sorted_files(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("motion-") && n.ends_with(suffix)))
        .collect();
    v.sort();
    v
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

impl ServiceState {
    /// Collect tasks from every run under `root`. An item rated in one run
    /// (same kind, motion and system) is not repeated from later runs.
    pub fn load(root: &Path, opts: &ServeOptions) -> Result<Self, RunError> {
        let dirs = run_dirs(root)?;
        let manifests: Vec<(PathBuf, RunManifest)> =
            dirs.iter().filter_map(|d| RunManifest::load(d).ok().map(|m| (d.clone(), m))).collect();
        if manifests.is_empty() {
            return Err(RunError::NotFound(format!("no run manifest under {}", root.display())));
        }
        let protocol = manifests[0].1.annotation.clone();
        let seed = opts.seed.unwrap_or(if protocol.seed == 0 { DEFAULT_ANNOTATION_SEED } else { protocol.seed });
        let mut instructions: BTreeMap<u32, String> =
            Corpus::bundled().instructions.iter().map(|i| (i.id, i.text.clone())).collect();
        let mut seen = HashSet::new();
        let mut tasks = Vec::new();
        let mut push = |kind: TargetKind, motion_id: u32, artifact: String, system_tag: String| {
            if seen.insert((kind, motion_id, system_tag.clone())) {
                tasks.push(AnnotationTask {
                    task_id: task_id(seed, kind, &artifact),
                    target_kind: kind,
                    motion_id,
                    artifact,
                    system_tag,
                    assigned_raters: Vec::new(),
                    rubric: kind,
                });
            }
        };
        for (dir, m) in &manifests {
            for p in sorted_files(&dir.join("plans"), ".json") {
                if let Ok(plan) = HighLevelPlan::from_path(&p) {
                    instructions.insert(plan.instruction.id, plan.instruction.text.clone());
                    push(TargetKind::HighLevelPlan, plan.instruction.id, rel(root, &p), m.plan_tag());
                }
            }
            for (sub, tag) in [("clips", m.system_tag()), ("clips/oracle", ORACLE_TAG.to_string())] {
                for p in sorted_files(&dir.join(sub), ".clip.json") {
                    if let Ok(clip) = AnimationClip::from_path(&p) {
                        let id = clip.motion_id.unwrap_or(0);
                        push(TargetKind::Animation, id, rel(root, &p), tag.clone());
                    }
                }
            }
        }
        tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        if !opts.raters.is_empty() {
            assign(&mut tasks, &opts.raters, protocol.raters_per_plan, protocol.raters_per_animation);
        }
        let index = tasks.iter().enumerate().map(|(i, t)| (t.task_id.clone(), i)).collect();
        Ok(ServiceState {
            root: root.to_path_buf(),
            tasks,
            index,
            instructions,
            seed,
            store: Mutex::new(()),
            ui_dir: opts.ui_dir.clone(),
        })
    }

    pub fn tasks(&self) -> &[AnnotationTask] {
        &self.tasks
    }

    pub fn task(&self, id: &str) -> Option<&AnnotationTask> {
        self.index.get(id).map(|i| &self.tasks[*i])
    }

    pub fn ratings_path(&self) -> PathBuf {
        self.root.join(RATINGS_FILE)
    }

    fn stored(&self) -> Vec<RatingRecord> {
        let path = self.ratings_path();
        if !path.is_file() {
            return Vec::new();
        }
        eval::load_ratings(&path).unwrap_or_else(|e| {
            log::error!("{e}");
            Vec::new()
        })
    }

    /// Tasks for `rater`, interleaving system tags round-robin. Each
    /// system's queue and the order of systems are shuffled with a seed
    /// derived from the service seed and the rater id.
    pub fn tasks_for(&self, rater: &str) -> Vec<&AnnotationTask> {
        let mut by_system: BTreeMap<&str, Vec<&AnnotationTask>> = BTreeMap::new();
        for t in &self.tasks {
            if t.assigned_raters.is_empty() || t.assigned_raters.iter().any(|r| r == rater) {
                by_system.entry(&t.system_tag).or_default().push(t);
            }
        }
        let rater_hash = Sha256::digest(rater.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&rater_hash[..8]);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ u64::from_le_bytes(bytes));
        let mut queues: Vec<Vec<&AnnotationTask>> = by_system.into_values().collect();
        for q in &mut queues {
            q.shuffle(&mut rng);
            q.reverse();
        }
        queues.shuffle(&mut rng);
        let mut out = Vec::with_capacity(self.tasks.len());
        while queues.iter().any(|q| !q.is_empty()) {
            for q in &mut queues {
                if let Some(t) = q.pop() {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Validate a submission against its task and rubric, then append it.
    pub fn submit(&self, sub: RatingSubmission) -> Result<RatingRecord, SubmitError> {
        let task = self.task(&sub.task_id).ok_or_else(|| SubmitError::UnknownTask(sub.task_id.clone()))?;
        let score = u8::try_from(sub.score)
            .map_err(|_| SubmitError::Rubric(format!("{} score {} outside 1-5", task.target_kind.metric(), sub.score)))?;
        let record = RatingRecord {
            rater_id: sub.rater_id,
            target_kind: task.target_kind,
            motion_id: task.motion_id,
            system_tag: task.system_tag.clone(),
            score,
            bpq: sub.bpq,
            task_id: Some(task.task_id.clone()),
            comment: sub.comment,
            submitted_at: Some(chrono::Utc::now().to_rfc3339()),
        };
        record.validate().map_err(|e| SubmitError::Rubric(e.to_string()))?;
        let line = serde_json::to_string(&record).expect("record serializes") + "\n";
        let _guard = self.store.lock().expect("ratings store lock");
        let path = self.ratings_path();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| SubmitError::Io(e.to_string()))?;
        }
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| SubmitError::Io(e.to_string()))?;
        f.write_all(line.as_bytes()).map_err(|e| SubmitError::Io(e.to_string()))?;
        Ok(record)
    }
}

/// Spread tasks of each kind over the roster, `per_kind` raters each,
/// cycling so every rater gets an even share.
fn assign(tasks: &mut [AnnotationTask], roster: &[String], per_plan: usize, per_animation: usize) {
    for (kind, per) in [(TargetKind::HighLevelPlan, per_plan), (TargetKind::Animation, per_animation)] {
        let per = per.min(roster.len());
        let mut cursor = 0;
        for t in tasks.iter_mut().filter(|t| t.target_kind == kind) {
            t.assigned_raters = (0..per).map(|j| roster[(cursor + j) % roster.len()].clone()).collect();
            cursor = (cursor + per) % roster.len();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubmitError {
    UnknownTask(String),
    Rubric(String),
    Io(String),
}

impl IntoResponse for SubmitError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            SubmitError::UnknownTask(id) => (StatusCode::NOT_FOUND, format!("unknown task {id}")),
            SubmitError::Rubric(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            SubmitError::Io(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

fn not_found(what: impl std::fmt::Display) -> Response {
    (StatusCode::NOT_FOUND, Json(json!({ "error": format!("{what} not found") }))).into_response()
}

#[derive(Debug, Deserialize)]
struct RaterQuery {
    rater: Option<String>,
}

async fn list_tasks(State(s): State<Arc<ServiceState>>, Query(q): Query<RaterQuery>) -> Response {
    let Some(rater) = q.rater.filter(|r| !r.trim().is_empty()) else {
        return (StatusCode::BAD_REQUEST, Json(json!({ "error": "missing rater query parameter" }))).into_response();
    };
    let done: HashSet<String> =
        s.stored().into_iter().filter(|r| r.rater_id == rater).filter_map(|r| r.task_id).collect();
    let tasks: Vec<RaterTask> = s
        .tasks_for(&rater)
        .into_iter()
        .map(|t| RaterTask {
            task_id: t.task_id.clone(),
            target_kind: t.target_kind,
            motion_id: t.motion_id,
            instruction: s.instructions.get(&t.motion_id).cloned().unwrap_or_default(),
            rubric_url: format!("/rubric/{}", t.rubric),
            artifact_url: match t.target_kind {
                TargetKind::HighLevelPlan => format!("/plan/{}", t.task_id),
                TargetKind::Animation => format!("/clip/{}", t.task_id),
            },
            done: done.contains(&t.task_id),
        })
        .collect();
    Json(json!({ "rater": rater, "tasks": tasks })).into_response()
}

/// Clip without fields that would reveal which system produced it.
pub fn blinded_clip(clip: &AnimationClip) -> Value {
    let mut v = serde_json::to_value(clip).expect("clip serializes");
    if let Some(o) = v.as_object_mut() {
        o.remove("source");
        o.remove("rules_version");
    }
    v
}

/// Plan reduced to the instruction and its steps.
pub fn blinded_plan(plan: &HighLevelPlan) -> Value {
    json!({ "instruction": plan.instruction, "steps": plan.steps })
}

async fn get_clip(State(s): State<Arc<ServiceState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(t) = s.task(&id).filter(|t| t.target_kind == TargetKind::Animation) else {
        return not_found(format!("clip task {id}"));
    };
    match AnimationClip::from_path(s.root.join(&t.artifact)) {
        Ok(clip) => {
            let mut v = blinded_clip(&clip);
            v["task_id"] = json!(id);
            Json(v).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

async fn get_plan(State(s): State<Arc<ServiceState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(t) = s.task(&id).filter(|t| t.target_kind == TargetKind::HighLevelPlan) else {
        return not_found(format!("plan task {id}"));
    };
    match HighLevelPlan::from_path(s.root.join(&t.artifact)) {
        Ok(plan) => {
            let mut v = blinded_plan(&plan);
            v["task_id"] = json!(id);
            Json(v).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

/// Rubric text for a target kind.
pub fn rubric(kind: TargetKind) -> Value {
    let all: Value = serde_json::from_str(RUBRICS).expect("bundled rubrics parse");
    all[kind.as_str()].clone()
}

async fn get_rubric(UrlPath(kind): UrlPath<String>) -> Response {
    match kind.parse::<TargetKind>() {
        Ok(k) => Json(rubric(k)).into_response(),
        Err(_) => not_found(format!("rubric {kind}")),
    }
}

async fn get_skeleton() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], SKELETON).into_response()
}

async fn post_rating(State(s): State<Arc<ServiceState>>, Json(sub): Json<RatingSubmission>) -> Response {
    match s.submit(sub) {
        Ok(r) => (StatusCode::CREATED, Json(json!({ "status": "stored", "task_id": r.task_id }))).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn export_ratings(State(s): State<Arc<ServiceState>>) -> Response {
    let body = {
        let _guard = s.store.lock().expect("ratings store lock");
        std::fs::read_to_string(s.ratings_path()).unwrap_or_default()
    };
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

const PLACEHOLDER_INDEX: &str = "<!doctype html><title>annotation service</title>\
<p>The annotation UI is not installed. Pass <code>--ui &lt;dir&gt;</code> to serve it.</p>\
<p>Endpoints: GET /tasks?rater=, GET /clip/{id}, GET /plan/{id}, GET /rubric/{kind}, GET /skeleton, \
POST /ratings, GET /export/ratings</p>";

pub fn router(state: Arc<ServiceState>) -> Router {
    let ui = state.ui_dir.clone();
    let api = Router::new()
        .route("/tasks", get(list_tasks))
        .route("/clip/{id}", get(get_clip))
        .route("/plan/{id}", get(get_plan))
        .route("/rubric/{kind}", get(get_rubric))
        .route("/skeleton", get(get_skeleton))
        .route("/ratings", post(post_rating))
        .route("/export/ratings", get(export_ratings))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    }
}

/// Serve until interrupted.
pub fn serve(root: &Path, addr: SocketAddr, opts: &ServeOptions) -> Result<(), RunError> {
    let state = Arc::new(ServiceState::load(root, opts)?);
    log::info!("{} annotation tasks from {}", state.tasks.len(), root.display());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str, kind: TargetKind, sys: &str) -> AnnotationTask {
        AnnotationTask {
            task_id: id.into(),
            target_kind: kind,
            motion_id: 1,
            artifact: String::new(),
            system_tag: sys.into(),
            assigned_raters: vec![],
            rubric: kind,
        }
    }

    #[test]
    fn roster_assignment_is_even() {
        let mut tasks: Vec<_> = (0..10).map(|i| task(&i.to_string(), TargetKind::Animation, "s")).collect();
        let roster: Vec<String> = (0..10).map(|i| format!("r{i}")).collect();
        assign(&mut tasks, &roster, 3, 5);
        let mut load: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &tasks {
            assert_eq!(t.assigned_raters.len(), 5);
            let distinct: HashSet<_> = t.assigned_raters.iter().collect();
            assert_eq!(distinct.len(), 5);
            for r in &t.assigned_raters {
                *load.entry(r).or_default() += 1;
            }
        }
        assert!(load.values().all(|n| *n == 5));
    }

    #[test]
    fn task_ids_are_opaque_and_stable() {
        let a = task_id(1, TargetKind::Animation, "clips/motion-01.clip.json");
        assert_eq!(a, task_id(1, TargetKind::Animation, "clips/motion-01.clip.json"));
        assert_ne!(a, task_id(2, TargetKind::Animation, "clips/motion-01.clip.json"));
        assert_eq!(a.len(), 16);
        assert!(!a.contains("motion"));
    }
}
