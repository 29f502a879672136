//! HTTP control surface for a running scan:
//! `GET /plan`, `POST /plan {threshold_dbm?, span_hz?, step_hz?}`,
//! `POST /stop`, `POST /start`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pdwatch_core::sweep::{MonitorControl, SweepPlan};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStatus {
    pub plan: SweepPlan,
    pub running: bool,
    pub alarm: Option<String>,
    pub sweeps_completed: u64,
    pub events_detected: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanUpdate {
    pub threshold_dbm: Option<f64>,
    pub span_hz: Option<f64>,
    pub step_hz: Option<f64>,
}

fn status(c: &MonitorControl) -> PlanStatus {
    PlanStatus {
        plan: c.plan(),
        running: c.is_running(),
        alarm: c.alarm(),
        sweeps_completed: c.sweeps_completed(),
        events_detected: c.events_detected(),
    }
}

fn reject(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(serde_json::json!({ "error": "bad_plan", "message": message }))).into_response()
}

async fn get_plan(State(c): State<Arc<MonitorControl>>) -> Json<PlanStatus> {
    Json(status(&c))
}

async fn post_plan(State(c): State<Arc<MonitorControl>>, body: axum::body::Bytes) -> Response {
    let update: PlanUpdate = match serde_json::from_slice(&body) {
        Ok(u) => u,
        Err(e) => return reject(e.to_string()),
    };
    let applied = c.update_plan(|p| {
        if let Some(t) = update.threshold_dbm {
            p.threshold_dbm = t;
        }
        if let Some(s) = update.span_hz {
            p.span = s;
        }
        if let Some(s) = update.step_hz {
            p.step = s;
        }
    });
    match applied {
        Ok(_) => Json(status(&c)).into_response(),
        Err(e) => reject(e.to_string()),
    }
}

async fn stop(State(c): State<Arc<MonitorControl>>) -> Json<PlanStatus> {
    c.pause();
    Json(status(&c))
}

async fn start(State(c): State<Arc<MonitorControl>>) -> Json<PlanStatus> {
    c.resume();
    Json(status(&c))
}

pub fn router(control: Arc<MonitorControl>) -> Router {
    Router::new()
        .route("/plan", get(get_plan).post(post_plan))
        .route("/stop", post(stop))
        .route("/start", post(start))
        .layer(CorsLayer::permissive())
        .with_state(control)
}

pub struct ControlServer {
    pub addr: SocketAddr,
    runtime: Option<tokio::runtime::Runtime>,
}

impl ControlServer {
    pub fn start(bind: SocketAddr, control: Arc<MonitorControl>) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(1).enable_all().build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(bind))?;
        let addr = listener.local_addr()?;
        let app = router(control);
        runtime.spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!("control endpoint stopped: {e}");
            }
        });
        Ok(Self { addr, runtime: Some(runtime) })
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}
