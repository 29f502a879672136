//! Remote store service: content-addressed artifact storage, event
//! listing, latest stitched spectrum and subscriber notification.
//!
//! On-disk layout under the service root:
//!
//! ```text
//! artifacts/<event_id>/<filename>
//! spectra/<sweep_id>.csv, spectra/latest.json
//! events.jsonl          registered events, append-only
//! subscriptions.json
//! deliveries.jsonl, dead_letters.jsonl
//! outbox/<name>
//! ```

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use pdwatch_core::codec::AppendLog;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;
use uuid::Uuid;

use crate::notify::{Notifier, NotifyConfig};
use crate::wire::{
    is_safe_name, is_sha256_hex, sha256_hex, ApiErrorBody, ArtifactView, Delivery, EventMeta, EventView, Health,
    PutResponse, PutStatus, Subscription, SweepMeta, EVENT_HEADER, HASH_HEADER, SWEEP_HEADER,
};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub root: PathBuf,
    pub bind: SocketAddr,
    /// Required as `Authorization: Bearer <token>` on every route except `/health`.
    pub token: Option<String>,
    /// Base for artifact URLs in listings and notifications; defaults to
    /// `http://<bound address>`.
    pub public_url: Option<String>,
    pub notify: NotifyConfig,
}

impl ServerConfig {
    pub fn new(root: impl Into<PathBuf>, bind: SocketAddr) -> Self {
        Self { root: root.into(), bind, token: None, public_url: None, notify: NotifyConfig::default() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt service state {path}: {message}")]
    State { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServerError + '_ {
    move |source| ServerError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        tracing::error!("internal error: {e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ApiErrorBody { error: self.code.into(), message: self.message })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LatestSpectrum {
    sweep_id: Uuid,
    t_start: DateTime<Utc>,
}

struct Events {
    list: Vec<EventView>,
    by_id: HashMap<Uuid, usize>,
}

pub(crate) struct AppState {
    root: PathBuf,
    token: Option<String>,
    public_url: String,
    events: RwLock<Events>,
    events_log: AppendLog<EventView>,
    path_locks: Mutex<HashMap<PathBuf, Arc<tokio::sync::Mutex<()>>>>,
    latest: tokio::sync::Mutex<Option<LatestSpectrum>>,
    notifier: Arc<Notifier>,
}

impl AppState {
    fn path_lock(&self, path: &Path) -> Arc<tokio::sync::Mutex<()>> {
        self.path_locks.lock().expect("path lock table").entry(path.to_path_buf()).or_default().clone()
    }

    fn artifact_path(&self, event_id: Uuid, filename: &str) -> PathBuf {
        self.root.join("artifacts").join(event_id.to_string()).join(filename)
    }

    fn artifact_url(&self, event_id: Uuid, filename: &str) -> String {
        format!("{}/artifacts/{event_id}/{filename}", self.public_url)
    }

    fn authorize(&self, headers: &HeaderMap) -> ApiResult<()> {
        let Some(token) = &self.token else { return Ok(()) };
        let given = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given.and_then(|v| v.strip_prefix("Bearer ")) == Some(token.as_str()) {
            Ok(())
        } else {
            Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token"))
        }
    }
}

fn header_str<'a>(headers: &'a HeaderMap, name: &str) -> ApiResult<Option<&'a str>> {
    headers
        .get(name)
        .map(|v| v.to_str().map_err(|_| ApiError::bad("bad_header", format!("{name} is not ASCII"))))
        .transpose()
}

fn declared_hash(headers: &HeaderMap) -> ApiResult<String> {
    let h = header_str(headers, HASH_HEADER)?
        .ok_or_else(|| ApiError::bad("missing_content_hash", format!("{HASH_HEADER} header is required")))?
        .to_ascii_lowercase();
    if !is_sha256_hex(&h) {
        return Err(ApiError::bad("bad_content_hash", "content hash must be 64 hex digits"));
    }
    Ok(h)
}

fn check_body(body: &[u8], declared: &str) -> ApiResult<()> {
    let actual = sha256_hex(body);
    if actual != declared {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "hash_mismatch",
            format!("body hashes to {actual}, declared {declared}"),
        ));
    }
    Ok(())
}

/// Write `body` to `path` unless an object already exists there.
async fn store_object(path: &Path, body: &[u8], hash: &str) -> ApiResult<PutStatus> {
    match tokio::fs::read(path).await {
        Ok(existing) => {
            let existing_hash = sha256_hex(&existing);
            return if existing_hash == hash {
                Ok(PutStatus::Duplicate)
            } else {
                Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "hash_conflict",
                    format!("{} already stored with hash {existing_hash}", path.display()),
                ))
            };
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(ApiError::internal(e)),
    }
    let dir = path.parent().expect("object paths have a parent");
    tokio::fs::create_dir_all(dir).await.map_err(ApiError::internal)?;
    let tmp = dir.join(format!(".{}.tmp", Uuid::new_v4()));
    tokio::fs::write(&tmp, body).await.map_err(ApiError::internal)?;
    tokio::fs::rename(&tmp, path).await.map_err(ApiError::internal)?;
    Ok(PutStatus::Stored)
}

async fn put_artifact(
    State(st): State<Arc<AppState>>,
    UrlPath((event_id, filename)): UrlPath<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<PutResponse>> {
    st.authorize(&headers)?;
    let event_id = Uuid::parse_str(&event_id).map_err(|_| ApiError::bad("bad_event_id", "event id must be a UUID"))?;
    if !is_safe_name(&filename) {
        return Err(ApiError::bad("bad_filename", "file name must be a plain name"));
    }
    let hash = declared_hash(&headers)?;
    let meta = header_str(&headers, EVENT_HEADER)?
        .map(|raw| serde_json::from_str::<EventMeta>(raw))
        .transpose()
        .map_err(|e| ApiError::bad("bad_event_meta", e.to_string()))?;
    if let Some(m) = &meta {
        if m.event_id != event_id || !m.artifacts.contains(&filename) || !m.artifacts.iter().all(|a| is_safe_name(a)) {
            return Err(ApiError::bad("bad_event_meta", "metadata does not describe this artifact"));
        }
    }
    check_body(&body, &hash)?;

    let path = st.artifact_path(event_id, &filename);
    let lock = st.path_lock(&path);
    let status = {
        let _guard = lock.lock().await;
        store_object(&path, &body, &hash).await?
    };
    let event_visible = match meta {
        Some(m) => register_if_complete(&st, m).await?,
        None => st.events.read().await.by_id.contains_key(&event_id),
    };
    Ok(Json(PutResponse { status, content_hash: hash, bytes: body.len() as u64, event_visible }))
}

/// Publish the event once every declared artifact is on disk. Runs on
/// every upload (duplicates included) so a crash between storing the last
/// file and registering heals on the agent's retry.
async fn register_if_complete(st: &AppState, meta: EventMeta) -> ApiResult<bool> {
    if st.events.read().await.by_id.contains_key(&meta.event_id) {
        return Ok(true);
    }
    let mut artifacts = Vec::with_capacity(meta.artifacts.len());
    for name in &meta.artifacts {
        let path = st.artifact_path(meta.event_id, name);
        match tokio::fs::read(&path).await {
            Ok(bytes) => artifacts.push(ArtifactView {
                filename: name.clone(),
                url: st.artifact_url(meta.event_id, name),
                content_hash: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(false),
            Err(e) => return Err(ApiError::internal(e)),
        }
    }
    let mut events = st.events.write().await;
    if events.by_id.contains_key(&meta.event_id) {
        return Ok(true);
    }
    let view = EventView {
        event_id: meta.event_id,
        t0: meta.t0,
        peak_freq_hz: meta.peak_freq_hz,
        peak_power_dbm: meta.peak_power_dbm,
        threshold_dbm: meta.threshold_dbm,
        sweep_id: meta.sweep_id,
        received_at: Utc::now(),
        artifacts,
    };
    st.events_log.append(&view).map_err(ApiError::internal)?;
    insert_sorted(&mut events, view.clone());
    drop(events);
    st.notifier.enqueue(view);
    Ok(true)
}

fn insert_sorted(events: &mut Events, view: EventView) {
    let at = events.list.partition_point(|e| (e.t0, e.event_id) <= (view.t0, view.event_id));
    events.list.insert(at, view);
    events.by_id = events.list.iter().enumerate().map(|(i, e)| (e.event_id, i)).collect();
}

#[derive(Debug, Deserialize)]
struct SinceQuery {
    since: Option<String>,
}

fn parse_since(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(ms) = raw.parse::<i64>() {
        return DateTime::from_timestamp_millis(ms);
    }
    DateTime::parse_from_rfc3339(raw).ok().map(|t| t.with_timezone(&Utc))
}

async fn list_events(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<SinceQuery>,
) -> ApiResult<Json<Vec<EventView>>> {
    st.authorize(&headers)?;
    let since = match q.since.as_deref() {
        None | Some("") => None,
        Some(raw) => Some(
            parse_since(raw)
                .ok_or_else(|| ApiError::bad("bad_since", "since must be unix milliseconds or RFC 3339"))?,
        ),
    };
    let events = st.events.read().await;
    let out = events.list.iter().filter(|e| since.is_none_or(|s| e.t0 > s)).cloned().collect();
    Ok(Json(out))
}

fn content_type(name: &str) -> &'static str {
    if name.ends_with(".csv") {
        "text/csv"
    } else {
        "application/octet-stream"
    }
}

async fn get_artifact(
    State(st): State<Arc<AppState>>,
    UrlPath((event_id, filename)): UrlPath<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    st.authorize(&headers)?;
    let event_id = Uuid::parse_str(&event_id).map_err(|_| ApiError::bad("bad_event_id", "event id must be a UUID"))?;
    if !is_safe_name(&filename) {
        return Err(ApiError::bad("bad_filename", "file name must be a plain name"));
    }
    match tokio::fs::read(st.artifact_path(event_id, &filename)).await {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, content_type(&filename))], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such artifact"))
        }
        Err(e) => Err(ApiError::internal(e)),
    }
}

async fn put_spectrum(
    State(st): State<Arc<AppState>>,
    UrlPath(sweep_id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<PutResponse>> {
    st.authorize(&headers)?;
    let sweep_id = Uuid::parse_str(&sweep_id).map_err(|_| ApiError::bad("bad_sweep_id", "sweep id must be a UUID"))?;
    let hash = declared_hash(&headers)?;
    let meta: SweepMeta = header_str(&headers, SWEEP_HEADER)?
        .ok_or_else(|| ApiError::bad("missing_sweep_meta", format!("{SWEEP_HEADER} header is required")))
        .and_then(|raw| serde_json::from_str(raw).map_err(|e| ApiError::bad("bad_sweep_meta", e.to_string())))?;
    if meta.sweep_id != sweep_id {
        return Err(ApiError::bad("bad_sweep_meta", "metadata is for another sweep"));
    }
    check_body(&body, &hash)?;
    let path = st.root.join("spectra").join(format!("{sweep_id}.csv"));
    let lock = st.path_lock(&path);
    let status = {
        let _guard = lock.lock().await;
        store_object(&path, &body, &hash).await?
    };
    let mut latest = st.latest.lock().await;
    if latest.as_ref().is_none_or(|l| (meta.t_start, meta.sweep_id) >= (l.t_start, l.sweep_id)) {
        let next = LatestSpectrum { sweep_id, t_start: meta.t_start };
        let p = st.root.join("spectra/latest.json");
        write_json_atomic(&p, &next).await.map_err(ApiError::internal)?;
        *latest = Some(next);
    }
    Ok(Json(PutResponse { status, content_hash: hash, bytes: body.len() as u64, event_visible: false }))
}

async fn latest_spectrum(State(st): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    st.authorize(&headers)?;
    let Some(latest) = st.latest.lock().await.clone() else {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", "no spectrum uploaded yet"));
    };
    let bytes = tokio::fs::read(st.root.join("spectra").join(format!("{}.csv", latest.sweep_id)))
        .await
        .map_err(ApiError::internal)?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv".to_string()),
            (header::HeaderName::from_static("x-sweep-id"), latest.sweep_id.to_string()),
        ],
        bytes,
    )
        .into_response())
}

async fn add_subscription(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Subscription>)> {
    st.authorize(&headers)?;
    let target: Delivery =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad("bad_subscription", e.to_string()))?;
    match &target {
        Delivery::Webhook { url } if !(url.starts_with("http://") || url.starts_with("https://")) => {
            return Err(ApiError::bad("bad_subscription", "webhook url must be http(s)"));
        }
        Delivery::Outbox { name } if !is_safe_name(name) => {
            return Err(ApiError::bad("bad_subscription", "outbox name must be a plain file name"));
        }
        _ => {}
    }
    let (sub, created) = st.notifier.subscribe(target).await.map_err(ApiError::internal)?;
    Ok((if created { StatusCode::CREATED } else { StatusCode::OK }, Json(sub)))
}

async fn list_subscriptions(State(st): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Json<Vec<Subscription>>> {
    st.authorize(&headers)?;
    Ok(Json(st.notifier.subscriptions().await))
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Health> {
    let counts = st.notifier.counts().await;
    Json(Health {
        status: "ok".into(),
        events: st.events.read().await.list.len(),
        subscribers: counts.0,
        deliveries: counts.1,
        dead_letters: counts.2,
    })
}

pub(crate) async fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", Uuid::new_v4().simple()));
    tokio::fs::write(&tmp, serde_json::to_vec_pretty(value)?).await?;
    tokio::fs::rename(&tmp, path).await
}

fn load_state(root: &Path) -> Result<(Events, AppendLog<EventView>, Option<LatestSpectrum>), ServerError> {
    for sub in ["artifacts", "spectra", "outbox"] {
        let d = root.join(sub);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let log_path = root.join("events.jsonl");
    let state_err =
        |path: &Path, e: &dyn std::fmt::Display| ServerError::State { path: path.into(), message: e.to_string() };
    let log = AppendLog::<EventView>::open(&log_path).map_err(|e| state_err(&log_path, &e))?;
    let mut events = Events { list: Vec::new(), by_id: HashMap::new() };
    for view in AppendLog::<EventView>::read_all(&log_path).map_err(|e| state_err(&log_path, &e))? {
        if !events.by_id.contains_key(&view.event_id) {
            insert_sorted(&mut events, view);
        }
    }
    let latest_path = root.join("spectra/latest.json");
    let latest = match std::fs::read(&latest_path) {
        Ok(b) => Some(serde_json::from_slice(&b).map_err(|e| state_err(&latest_path, &e))?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io_err(&latest_path)(e)),
    };
    Ok((events, log, latest))
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/artifacts/{event_id}/{filename}", put(put_artifact).get(get_artifact))
        .route("/events", get(list_events))
        .route("/spectrum/latest", get(latest_spectrum))
        .route("/spectrum/{sweep_id}", put(put_spectrum))
        .route("/subscriptions", post(add_subscription).get(list_subscriptions))
        .route("/health", get(health))
        .layer(axum::extract::DefaultBodyLimit::max(256 * 1024 * 1024))
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(state)
}

/// A running service on its own runtime thread.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stop accepting connections and wait for in-flight requests.
    pub fn stop(mut self) {
        self.stop_inner();
    }

    /// Block until the service exits on its own (it does not, short of
    /// an accept error); used by the CLI foreground mode.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop_inner(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

/// Bind, load persisted state and start serving in the background.
pub fn spawn(config: ServerConfig) -> Result<ServerHandle, ServerError> {
    let (events, events_log, latest) = load_state(&config.root)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(io_err(&config.root))?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(config.bind))
        .map_err(|source| ServerError::Io { path: PathBuf::from(config.bind.to_string()), source })?;
    let addr = listener.local_addr().map_err(io_err(&config.root))?;
    let public_url = config.public_url.clone().unwrap_or_else(|| format!("http://{addr}"));
    let notifier = runtime
        .block_on(Notifier::start(config.root.clone(), config.notify.clone()))
        .map_err(|e| ServerError::State { path: config.root.clone(), message: e.to_string() })?;
    let pending: Vec<EventView> = events.list.clone();
    let state = Arc::new(AppState {
        root: config.root.clone(),
        token: config.token.clone(),
        public_url,
        events: RwLock::new(events),
        events_log,
        path_locks: Mutex::new(HashMap::new()),
        latest: tokio::sync::Mutex::new(latest),
        notifier: notifier.clone(),
    });
    // deliveries interrupted by a restart resume here; dedupe skips the rest
    for e in pending {
        notifier.enqueue(e);
    }
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(state);
    let thread = std::thread::Builder::new()
        .name("pdwatch-serve".into())
        .spawn(move || {
            runtime.block_on(async move {
                let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = serve.await {
                    tracing::error!("server stopped: {e}");
                }
            });
            runtime.shutdown_timeout(Duration::from_secs(2));
        })
        .map_err(io_err(&config.root))?;
    tracing::info!(%addr, root = %config.root.display(), "remote store listening");
    Ok(ServerHandle { addr, shutdown: Some(tx), thread: Some(thread) })
}
