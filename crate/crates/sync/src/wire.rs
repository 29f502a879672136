//! JSON bodies and headers shared by the agent and the remote service.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

/// SHA-256 of the request body, lowercase hex.
pub const HASH_HEADER: &str = "x-content-sha256";
/// Event metadata (JSON) sent with every artifact upload.
pub const EVENT_HEADER: &str = "x-pd-event";
/// Sweep metadata (JSON) sent with stitched spectrum uploads.
pub const SWEEP_HEADER: &str = "x-pd-sweep";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn is_sha256_hex(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Accepts plain file names only: ASCII letters, digits, `.`, `_`, `-`,
/// not starting with a dot.
pub fn is_safe_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 200
        && !name.starts_with('.')
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || b == b'-')
}

/// Event description carried in [`EVENT_HEADER`]. `artifacts` names every
/// file the event consists of; the event becomes visible once all are stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventMeta {
    pub event_id: Uuid,
    pub t0: DateTime<Utc>,
    pub peak_freq_hz: f64,
    pub peak_power_dbm: f64,
    pub threshold_dbm: f64,
    pub sweep_id: Uuid,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub sweep_id: Uuid,
    pub t_start: DateTime<Utc>,
    pub t_end: DateTime<Utc>,
    pub complete: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PutStatus {
    Stored,
    Duplicate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PutResponse {
    pub status: PutStatus,
    pub content_hash: String,
    pub bytes: u64,
    /// True once every artifact of the event is stored.
    #[serde(default)]
    pub event_visible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactView {
    pub filename: String,
    pub url: String,
    pub content_hash: String,
    pub bytes: u64,
}

/// One entry of `GET /events`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventView {
    pub event_id: Uuid,
    pub t0: DateTime<Utc>,
    pub peak_freq_hz: f64,
    pub peak_power_dbm: f64,
    pub threshold_dbm: f64,
    pub sweep_id: Uuid,
    pub received_at: DateTime<Utc>,
    pub artifacts: Vec<ArtifactView>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Delivery {
    Webhook {
        url: String,
    },
    /// Appends a plain-text message to `outbox/<name>` under the service root.
    Outbox {
        name: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub id: Uuid,
    pub created_at: DateTime<Utc>,
    pub target: Delivery,
}

/// Webhook body for a new event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotificationPayload {
    pub event_id: Uuid,
    pub t0: DateTime<Utc>,
    pub peak_freq_hz: f64,
    pub peak_power_dbm: f64,
    pub artifact_urls: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub events: usize,
    pub subscribers: usize,
    pub deliveries: usize,
    pub dead_letters: usize,
}
