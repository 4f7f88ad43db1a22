//! HTTP session service for demonstration collection, verification and scoring.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{Mutex, RwLock};

use narrowpass_core::densifier::LatticeConfig;
use narrowpass_core::geometry::Pose;
use narrowpass_core::reward::{score_trajectory, CostWeights, RewardReport};
use narrowpass_core::scene::{generate_batch, GenParams, Scene};
use narrowpass_core::textio::{write_demo, DemoError};
use narrowpass_core::verifier::{
    check_pose, check_swept, failure_note, verify_waypoints, PoseVerdict, SweptVerdict, VerificationReport, VerifyConfig,
};

pub const DEFAULT_HISTORY_LIMIT: usize = 1000;
pub const MAX_GENERATE: usize = 1000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub verify: VerifyConfig,
    pub lattice: LatticeConfig,
    pub weights: CostWeights,
    pub history_limit: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            verify: VerifyConfig::default(),
            lattice: LatticeConfig::default(),
            weights: CostWeights::default(),
            history_limit: DEFAULT_HISTORY_LIMIT,
        }
    }

    pub fn scenes_dir(&self) -> PathBuf {
        self.data_dir.join("scenes")
    }

    pub fn demos_dir(&self) -> PathBuf {
        self.data_dir.join("demos")
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown scene {0}")]
    UnknownScene(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) | ApiError::UnknownScene(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

impl From<DemoError> for ApiError {
    fn from(e: DemoError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone)]
enum Action {
    Move { prev: Pose },
    Record,
    Reset { prev: Pose },
    Clear { prev: Vec<Pose> },
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub scene: Scene,
    pub current: Pose,
    pub recorded: Vec<Pose>,
    history: VecDeque<Action>,
    pub created_at: u64,
    last_swept: Option<SweptVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub c1_ok: bool,
    pub c2_ok: bool,
    pub pose: PoseVerdict,
    /// Swept check from the previous pose, present after a move.
    pub swept: Option<SweptVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyStep {
    pub lin: f64,
    pub ang: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Scene>,
    pub current: Pose,
    pub recorded: Vec<Pose>,
    pub history_len: usize,
    pub created_at: u64,
    pub preview: Preview,
    pub verify: VerifyConfig,
    /// Default per-keypress deltas.
    pub key_step: KeyStep,
}

impl Session {
    fn view(&self, cfg: &ServiceConfig, with_scene: bool) -> SessionView {
        let pose = check_pose(&self.scene, &self.current);
        SessionView {
            id: self.id.clone(),
            scene: with_scene.then(|| self.scene.clone()),
            current: self.current,
            recorded: self.recorded.clone(),
            history_len: self.history.len(),
            created_at: self.created_at,
            preview: Preview { c1_ok: pose.boundary_ok, c2_ok: pose.collision_ok, pose, swept: self.last_swept },
            verify: cfg.verify,
            key_step: KeyStep { lin: cfg.verify.lin_limit / 5.0, ang: cfg.verify.ang_limit / 3.0 },
        }
    }

    fn push(&mut self, action: Action, limit: usize) {
        self.history.push_back(action);
        while self.history.len() > limit {
            self.history.pop_front();
        }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    scenes: RwLock<BTreeMap<String, Scene>>,
}

impl AppState {
    /// Builds the state and loads any scene files under `data_dir/scenes`.
    pub fn new(config: ServiceConfig) -> Result<Self, String> {
        let mut scenes = BTreeMap::new();
        let dir = config.scenes_dir();
        if dir.is_dir() {
            let entries = std::fs::read_dir(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            for entry in entries.flatten() {
                let path = entry.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                if let Ok(scene) = Scene::from_json(&text) {
                    scenes.insert(scene.id.clone(), scene);
                }
            }
        }
        Ok(Self { config, sessions: RwLock::new(HashMap::new()), scenes: RwLock::new(scenes) })
    }

    pub async fn add_scene(&self, scene: Scene) {
        self.scenes.write().await.insert(scene.id.clone(), scene);
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/move", post(apply_move))
        .route("/sessions/{id}/record", post(record))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/reset", post(reset))
        .route("/sessions/{id}/clear", post(clear))
        .route("/sessions/{id}/save", post(save))
        .route("/scenes", get(list_scenes))
        .route("/scenes/generate", post(generate))
        .route("/verify", post(verify))
        .route("/score", post(score))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum CreateSession {
    ById { scene_id: String },
    Inline { scene: Box<Scene> },
}

async fn create_session(State(st): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> ApiResult<SessionView> {
    let scene = match req {
        CreateSession::ById { scene_id } => {
            st.scenes.read().await.get(&scene_id).cloned().ok_or(ApiError::UnknownScene(scene_id))?
        }
        CreateSession::Inline { scene } => {
            scene.validate().map_err(|e| ApiError::Invalid(e.to_string()))?;
            *scene
        }
    };
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let session = Session {
        id: uuid::Uuid::new_v4().simple().to_string(),
        current: scene.start,
        scene,
        recorded: vec![],
        history: VecDeque::new(),
        created_at,
        last_swept: None,
    };
    let view = session.view(&st.config, true);
    st.sessions.write().await.insert(session.id.clone(), Arc::new(Mutex::new(session)));
    Ok(Json(view))
}

async fn get_session(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionView> {
    let s = st.session(&id).await?;
    let s = s.lock().await;
    Ok(Json(s.view(&st.config, true)))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MoveRequest {
    #[serde(default)]
    pub dx: f64,
    #[serde(default)]
    pub dy: f64,
    #[serde(default)]
    pub dphi: f64,
}

async fn apply_move(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(m): Json<MoveRequest>,
) -> ApiResult<SessionView> {
    let cfg = &st.config.verify;
    if ![m.dx, m.dy, m.dphi].iter().all(|v| v.is_finite()) {
        return Err(ApiError::BadRequest("move components must be finite".into()));
    }
    if m.dx.abs() > cfg.lin_limit || m.dy.abs() > cfg.lin_limit {
        return Err(ApiError::BadRequest(format!("translation exceeds lin_limit {}", cfg.lin_limit)));
    }
    if m.dphi.abs() > cfg.ang_limit {
        return Err(ApiError::BadRequest(format!("rotation exceeds ang_limit {}", cfg.ang_limit)));
    }
    let s = st.session(&id).await?;
    let mut s = s.lock().await;
    let prev = s.current;
    let next = Pose::new(prev.x + m.dx, prev.y + m.dy, prev.phi + m.dphi);
    s.last_swept = Some(check_swept(&s.scene, &prev, &next, cfg));
    s.current = next;
    s.push(Action::Move { prev }, st.config.history_limit);
    Ok(Json(s.view(&st.config, false)))
}

async fn record(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionView> {
    let s = st.session(&id).await?;
    let mut s = s.lock().await;
    let q = s.current;
    s.recorded.push(q);
    s.push(Action::Record, st.config.history_limit);
    Ok(Json(s.view(&st.config, false)))
}

async fn undo(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionView> {
    let s = st.session(&id).await?;
    let mut s = s.lock().await;
    match s.history.pop_back() {
        Some(Action::Move { prev }) | Some(Action::Reset { prev }) => {
            s.current = prev;
            s.last_swept = None;
        }
        Some(Action::Record) => {
            s.recorded.pop();
        }
        Some(Action::Clear { prev }) => s.recorded = prev,
        None => {}
    }
    Ok(Json(s.view(&st.config, false)))
}

async fn reset(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionView> {
    let s = st.session(&id).await?;
    let mut s = s.lock().await;
    let prev = s.current;
    s.current = s.scene.start;
    s.last_swept = None;
    s.push(Action::Reset { prev }, st.config.history_limit);
    Ok(Json(s.view(&st.config, false)))
}

async fn clear(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionView> {
    let s = st.session(&id).await?;
    let mut s = s.lock().await;
    let prev = std::mem::take(&mut s.recorded);
    s.push(Action::Clear { prev }, st.config.history_limit);
    Ok(Json(s.view(&st.config, false)))
}

#[derive(Debug, Default, Deserialize)]
pub struct SaveRequest {
    /// File stem for the saved demonstration; defaults to the session id.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaveResponse {
    pub csv_path: PathBuf,
    pub scene_path: PathBuf,
    pub waypoints: usize,
    pub report: VerificationReport,
    pub note: String,
}

fn valid_stem(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !name.starts_with('.')
}

async fn save(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<SaveRequest>>,
) -> ApiResult<SaveResponse> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let s = st.session(&id).await?;
    let s = s.lock().await;
    if s.recorded.is_empty() {
        return Err(ApiError::BadRequest("no recorded waypoints to save".into()));
    }
    let stem = req.name.unwrap_or_else(|| s.id.clone());
    if !valid_stem(&stem) {
        return Err(ApiError::BadRequest(format!("invalid demonstration name {stem:?}")));
    }
    let dir = st.config.demos_dir();
    std::fs::create_dir_all(&dir).map_err(|e| ApiError::Internal(format!("{}: {e}", dir.display())))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let (scene, recorded) = (s.scene.clone(), s.recorded.clone());
    write_demo(&csv_path, &scene, &recorded)?;
    let (verify, lattice) = (st.config.verify, st.config.lattice);
    let report = tokio::task::spawn_blocking(move || verify_waypoints(&scene, &recorded, &verify, &lattice))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(SaveResponse {
        scene_path: narrowpass_core::textio::demo_scene_path(&csv_path),
        csv_path,
        waypoints: s.recorded.len(),
        note: failure_note(&report),
        report,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub distribution_tag: String,
    pub num_openings: usize,
}

async fn list_scenes(State(st): State<Arc<AppState>>) -> Json<Vec<SceneEntry>> {
    let scenes = st.scenes.read().await;
    Json(
        scenes
            .values()
            .map(|s| SceneEntry {
                id: s.id.clone(),
                distribution_tag: s.distribution_tag.to_string(),
                num_openings: s.openings.len(),
            })
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
pub struct GenerateRequest {
    pub params: GenParams,
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

fn write_scene(dir: &Path, scene: &Scene) -> Result<(), ApiError> {
    std::fs::create_dir_all(dir).map_err(|e| ApiError::Internal(format!("{}: {e}", dir.display())))?;
    let path = dir.join(format!("{}.json", scene.id));
    std::fs::write(&path, scene.to_json()).map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))
}

async fn generate(State(st): State<Arc<AppState>>, Json(req): Json<GenerateRequest>) -> ApiResult<Vec<Scene>> {
    if req.count == 0 || req.count > MAX_GENERATE {
        return Err(ApiError::BadRequest(format!("count must be in 1..={MAX_GENERATE}")));
    }
    let params = req.params;
    let scenes = tokio::task::spawn_blocking(move || generate_batch(&params, req.count))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Invalid(e.to_string()))?;
    let dir = st.config.scenes_dir();
    for s in &scenes {
        write_scene(&dir, s)?;
        st.add_scene(s.clone()).await;
    }
    Ok(Json(scenes))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub scene: Scene,
    pub waypoints: Vec<Pose>,
}

async fn verify(State(st): State<Arc<AppState>>, Json(req): Json<VerifyRequest>) -> ApiResult<VerificationReport> {
    req.scene.validate().map_err(|e| ApiError::Invalid(e.to_string()))?;
    if req.waypoints.iter().any(|q| !q.is_finite()) {
        return Err(ApiError::BadRequest("waypoints must be finite".into()));
    }
    let (verify, lattice) = (st.config.verify, st.config.lattice);
    let report = tokio::task::spawn_blocking(move || verify_waypoints(&req.scene, &req.waypoints, &verify, &lattice))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(report))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub scene: Scene,
    pub trajectory: Vec<Pose>,
}

async fn score(State(st): State<Arc<AppState>>, Json(req): Json<ScoreRequest>) -> ApiResult<RewardReport> {
    req.scene.validate().map_err(|e| ApiError::Invalid(e.to_string()))?;
    if req.trajectory.is_empty() {
        return Err(ApiError::BadRequest("trajectory must not be empty".into()));
    }
    if req.trajectory.iter().any(|q| !q.is_finite()) {
        return Err(ApiError::BadRequest("trajectory states must be finite".into()));
    }
    Ok(Json(score_trajectory(&req.scene, &req.trajectory, &st.config.weights, &st.config.verify)))
}
