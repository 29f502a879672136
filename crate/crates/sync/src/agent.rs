//! Local sync agent: tails the event and sweep indexes, hashes each new
//! artifact and uploads it until the remote confirms the hash.
//!
//! All progress lives in one state file (records plus index cursors)
//! replaced atomically on every change, so the agent can be killed at any
//! point and resumes without losing or duplicating records.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::Utc;
use pdwatch_core::codec::{AppendLog, DataStore, EventIndexRecord, SweepIndexRecord, UploadState};
use rand::Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::wire::{
    sha256_hex, ApiErrorBody, EventMeta, PutResponse, SweepMeta, EVENT_HEADER, HASH_HEADER, SWEEP_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sync state {path} is unreadable: {message}")]
    State { path: PathBuf, message: String },
    #[error("reading index: {0}")]
    Index(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RemoteError {
    /// The request may or may not have reached the service.
    #[error("transport: {0}")]
    Transport(String),
    #[error("rejected with {status} {code}: {message}")]
    Rejected { status: u16, code: String, message: String },
}

/// Where artifacts go. [`HttpRemote`] talks to the remote service; tests
/// wrap it to inject faults.
pub trait RemoteStore: Send + Sync {
    fn put_artifact(
        &self,
        meta: &EventMeta,
        filename: &str,
        body: &[u8],
        hash: &str,
    ) -> Result<PutResponse, RemoteError>;
    fn put_spectrum(&self, meta: &SweepMeta, body: &[u8], hash: &str) -> Result<PutResponse, RemoteError>;
}

pub struct HttpRemote {
    base: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpRemote {
    pub fn new(base: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, RemoteError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        Ok(Self { base: base.into().trim_end_matches('/').to_string(), token, client })
    }

    fn put(
        &self,
        url: String,
        meta_header: (&str, String),
        body: &[u8],
        hash: &str,
    ) -> Result<PutResponse, RemoteError> {
        let mut req =
            self.client.put(url).header(HASH_HEADER, hash).header(meta_header.0, meta_header.1).body(body.to_vec());
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| RemoteError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            return resp.json::<PutResponse>().map_err(|e| RemoteError::Transport(e.to_string()));
        }
        let body =
            resp.json::<ApiErrorBody>().unwrap_or(ApiErrorBody { error: "unknown".into(), message: String::new() });
        if status.is_server_error() {
            return Err(RemoteError::Transport(format!("{status}: {}", body.message)));
        }
        Err(RemoteError::Rejected { status: status.as_u16(), code: body.error, message: body.message })
    }
}

impl RemoteStore for HttpRemote {
    fn put_artifact(
        &self,
        meta: &EventMeta,
        filename: &str,
        body: &[u8],
        hash: &str,
    ) -> Result<PutResponse, RemoteError> {
        let header = serde_json::to_string(meta).map_err(|e| RemoteError::Transport(e.to_string()))?;
        self.put(format!("{}/artifacts/{}/{filename}", self.base, meta.event_id), (EVENT_HEADER, header), body, hash)
    }

    fn put_spectrum(&self, meta: &SweepMeta, body: &[u8], hash: &str) -> Result<PutResponse, RemoteError> {
        let header = serde_json::to_string(meta).map_err(|e| RemoteError::Transport(e.to_string()))?;
        self.put(format!("{}/spectrum/{}", self.base, meta.sweep_id), (SWEEP_HEADER, header), body, hash)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordSource {
    Event(EventMeta),
    Sweep(SweepMeta),
}

/// Upload bookkeeping for one artifact file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncRecord {
    /// Event id, or sweep id for stitched spectra.
    pub id: Uuid,
    /// Relative to the data directory.
    pub path: String,
    pub content_hash: String,
    pub bytes: u64,
    pub state: UploadState,
    pub attempts: u32,
    pub last_error: Option<String>,
    /// Earliest next try, unix milliseconds.
    pub next_attempt_ms: i64,
    pub source: RecordSource,
}

impl SyncRecord {
    pub fn filename(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or(&self.path)
    }

    fn key(&self) -> (Uuid, String) {
        (self.id, self.path.clone())
    }

    fn advance(&mut self, to: UploadState) {
        if to > self.state {
            self.state = to;
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct AgentState {
    events_cursor: u64,
    sweeps_cursor: u64,
    records: Vec<SyncRecord>,
}

#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/sync/state.json`.
    pub state_path: Option<PathBuf>,
    pub workers: usize,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
    pub jitter: bool,
    pub poll_interval: Duration,
}

impl AgentConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            state_path: None,
            workers: 4,
            backoff_base: Duration::from_secs(1),
            backoff_cap: Duration::from_secs(60),
            jitter: true,
            poll_interval: Duration::from_millis(500),
        }
    }

    fn state_path(&self) -> PathBuf {
        self.state_path.clone().unwrap_or_else(|| self.data_dir.join("sync/state.json"))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AgentStatus {
    pub pending: usize,
    pub uploaded: usize,
    pub acked: usize,
    pub last_error: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UploadPass {
    pub attempted: usize,
    pub acked: usize,
    pub failed: usize,
}

struct Shared {
    state: AgentState,
    index: HashMap<(Uuid, String), usize>,
    last_error: Option<String>,
}

pub struct Agent<R> {
    cfg: AgentConfig,
    store: DataStore,
    state_path: PathBuf,
    remote: R,
    shared: Mutex<Shared>,
}

fn now_ms() -> i64 {
    Utc::now().timestamp_millis()
}

fn file_name(rel: &str) -> String {
    rel.rsplit('/').next().unwrap_or(rel).to_string()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let tmp = path.with_extension("json.tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)
}

impl<R: RemoteStore> Agent<R> {
    pub fn open(cfg: AgentConfig, remote: R) -> Result<Self, AgentError> {
        let store = DataStore::open(&cfg.data_dir)
            .map_err(|e| AgentError::State { path: cfg.data_dir.clone(), message: e.to_string() })?;
        let state_path = cfg.state_path();
        if let Some(dir) = state_path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| AgentError::Io { path: dir.into(), source })?;
        }
        let state: AgentState = match std::fs::read(&state_path) {
            Ok(b) => serde_json::from_slice(&b)
                .map_err(|e| AgentError::State { path: state_path.clone(), message: e.to_string() })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => AgentState::default(),
            Err(source) => return Err(AgentError::Io { path: state_path, source }),
        };
        let index = state.records.iter().enumerate().map(|(i, r)| (r.key(), i)).collect();
        Ok(Self { cfg, store, state_path, remote, shared: Mutex::new(Shared { state, index, last_error: None }) })
    }

    pub fn records(&self) -> Vec<SyncRecord> {
        self.shared.lock().expect("agent state").state.records.clone()
    }

    pub fn status(&self) -> AgentStatus {
        let s = self.shared.lock().expect("agent state");
        let count = |st| s.state.records.iter().filter(|r| r.state == st).count();
        AgentStatus {
            pending: count(UploadState::Pending),
            uploaded: count(UploadState::Uploaded),
            acked: count(UploadState::Acked),
            last_error: s.last_error.clone(),
        }
    }

    fn persist(&self, s: &Shared) -> Result<(), AgentError> {
        let bytes = serde_json::to_vec(&s.state).expect("state serializes");
        write_atomic(&self.state_path, &bytes)
            .map_err(|source| AgentError::Io { path: self.state_path.clone(), source })
    }

    fn new_record(&self, id: Uuid, rel: &str, source: RecordSource) -> SyncRecord {
        let (content_hash, bytes, last_error) = match std::fs::read(self.store.resolve(rel)) {
            Ok(b) => (sha256_hex(&b), b.len() as u64, None),
            Err(e) => (String::new(), 0, Some(format!("hashing {rel}: {e}"))),
        };
        SyncRecord {
            id,
            path: rel.to_string(),
            content_hash,
            bytes,
            state: UploadState::Pending,
            attempts: 0,
            last_error,
            next_attempt_ms: 0,
            source,
        }
    }

    /// Pick up index lines appended since the last call. Returns the number
    /// of new records.
    pub fn watch(&self) -> Result<usize, AgentError> {
        let result = self.watch_inner();
        let mut s = self.shared.lock().expect("agent state");
        match &result {
            Ok(_) => {
                if s.last_error.as_deref().is_some_and(|e| e.starts_with("index")) {
                    s.last_error = None;
                }
            }
            Err(e) => s.last_error = Some(format!("index: {e}")),
        }
        result
    }

    fn watch_inner(&self) -> Result<usize, AgentError> {
        let (events_cursor, sweeps_cursor) = {
            let s = self.shared.lock().expect("agent state");
            (s.state.events_cursor, s.state.sweeps_cursor)
        };
        let index_err = |e: pdwatch_core::CodecError| AgentError::Index(e.to_string());
        let (events, ev_next) = match self.store.events_index() {
            p if p.exists() => AppendLog::<EventIndexRecord>::read_from(&p, events_cursor).map_err(index_err)?,
            _ => (Vec::new(), events_cursor),
        };
        let (sweeps, sw_next) = match self.store.sweeps_index() {
            p if p.exists() => AppendLog::<SweepIndexRecord>::read_from(&p, sweeps_cursor).map_err(index_err)?,
            _ => (Vec::new(), sweeps_cursor),
        };

        let mut fresh = Vec::new();
        for e in &events {
            let meta = EventMeta {
                event_id: e.event_id,
                t0: e.t0,
                peak_freq_hz: e.peak_freq_hz,
                peak_power_dbm: e.peak_power_dbm,
                threshold_dbm: e.threshold_dbm,
                sweep_id: e.sweep_id,
                artifacts: vec![file_name(&e.iq_path), file_name(&e.spectrum_path)],
            };
            for rel in [&e.iq_path, &e.spectrum_path] {
                fresh.push(self.new_record(e.event_id, rel, RecordSource::Event(meta.clone())));
            }
        }
        for sw in &sweeps {
            let meta = SweepMeta { sweep_id: sw.sweep_id, t_start: sw.t_start, t_end: sw.t_end, complete: sw.complete };
            fresh.push(self.new_record(sw.sweep_id, &sw.spectrum_path, RecordSource::Sweep(meta)));
        }

        let mut s = self.shared.lock().expect("agent state");
        let mut added = 0;
        for r in fresh {
            let key = r.key();
            if s.index.contains_key(&key) {
                continue;
            }
            let at = s.state.records.len();
            s.index.insert(key, at);
            s.state.records.push(r);
            added += 1;
        }
        if added > 0 || ev_next != s.state.events_cursor || sw_next != s.state.sweeps_cursor {
            s.state.events_cursor = ev_next;
            s.state.sweeps_cursor = sw_next;
            self.persist(&s)?;
        }
        Ok(added)
    }

    fn backoff(&self, attempts: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempts.saturating_sub(1).min(30));
        let d = self.cfg.backoff_base.saturating_mul(factor).min(self.cfg.backoff_cap);
        if self.cfg.jitter {
            d.mul_f64(rand::rng().random_range(0.5..=1.0))
        } else {
            d
        }
    }

    fn try_upload(&self, rec: &SyncRecord) -> Result<PutResponse, RemoteError> {
        let body = std::fs::read(self.store.resolve(&rec.path))
            .map_err(|e| RemoteError::Transport(format!("reading {}: {e}", rec.path)))?;
        let hash = if rec.content_hash.is_empty() { sha256_hex(&body) } else { rec.content_hash.clone() };
        match &rec.source {
            RecordSource::Event(meta) => self.remote.put_artifact(meta, rec.filename(), &body, &hash),
            RecordSource::Sweep(meta) => self.remote.put_spectrum(meta, &body, &hash),
        }
    }

    fn apply(&self, key: &(Uuid, String), outcome: Result<PutResponse, RemoteError>) -> Result<bool, AgentError> {
        let mut s = self.shared.lock().expect("agent state");
        let at = s.index[key];
        let delay = {
            let rec = &s.state.records[at];
            self.backoff(rec.attempts + 1)
        };
        let rec = &mut s.state.records[at];
        rec.attempts += 1;
        let acked = match outcome {
            Ok(resp) => {
                if rec.content_hash.is_empty() {
                    rec.content_hash = resp.content_hash.clone();
                    rec.bytes = resp.bytes;
                }
                rec.advance(UploadState::Uploaded);
                if resp.content_hash == rec.content_hash {
                    rec.advance(UploadState::Acked);
                    rec.last_error = None;
                    true
                } else {
                    rec.last_error = Some(format!("remote confirmed hash {}", resp.content_hash));
                    rec.next_attempt_ms = now_ms() + delay.as_millis() as i64;
                    false
                }
            }
            Err(e) => {
                tracing::debug!(path = %rec.path, attempts = rec.attempts, "upload failed: {e}");
                rec.last_error = Some(e.to_string());
                rec.next_attempt_ms = now_ms() + delay.as_millis() as i64;
                false
            }
        };
        self.persist(&s)?;
        Ok(acked)
    }

    /// Upload every record that is not yet acknowledged and due, using up
    /// to `workers` parallel uploads.
    pub fn upload_due(&self) -> Result<UploadPass, AgentError> {
        let now = now_ms();
        let due: VecDeque<(Uuid, String)> = {
            let s = self.shared.lock().expect("agent state");
            s.state
                .records
                .iter()
                .filter(|r| r.state != UploadState::Acked && r.next_attempt_ms <= now)
                .map(SyncRecord::key)
                .collect()
        };
        let total = due.len();
        let queue = Mutex::new(due);
        let acked = std::sync::atomic::AtomicUsize::new(0);
        let first_err = Mutex::new(None);
        std::thread::scope(|scope| {
            for _ in 0..self.cfg.workers.max(1).min(total.max(1)) {
                scope.spawn(|| loop {
                    let Some(key) = queue.lock().expect("queue").pop_front() else { break };
                    let rec = {
                        let s = self.shared.lock().expect("agent state");
                        s.state.records[s.index[&key]].clone()
                    };
                    let outcome = self.try_upload(&rec);
                    match self.apply(&key, outcome) {
                        Ok(true) => {
                            acked.fetch_add(1, Ordering::Relaxed);
                        }
                        Ok(false) => {}
                        Err(e) => {
                            first_err.lock().expect("err slot").get_or_insert(e);
                            break;
                        }
                    }
                });
            }
        });
        if let Some(e) = first_err.into_inner().expect("err slot") {
            return Err(e);
        }
        let acked = acked.into_inner();
        Ok(UploadPass { attempted: total, acked, failed: total - acked })
    }

    pub fn run_once(&self) -> Result<UploadPass, AgentError> {
        if let Err(e) = self.watch() {
            tracing::warn!("{e}");
        }
        self.upload_due()
    }

    /// Watch and upload until `stop` is set.
    pub fn run(&self, stop: &AtomicBool) -> Result<(), AgentError> {
        let mut watch_failures = 0u32;
        while !stop.load(Ordering::SeqCst) {
            match self.watch() {
                Ok(_) => watch_failures = 0,
                Err(e @ AgentError::Index(_)) => {
                    watch_failures += 1;
                    tracing::warn!("{e}");
                }
                Err(e) => return Err(e),
            }
            self.upload_due()?;
            let pause = if watch_failures > 0 { self.backoff(watch_failures) } else { self.cfg.poll_interval };
            let until = std::time::Instant::now() + pause;
            while std::time::Instant::now() < until && !stop.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(20).min(pause));
            }
        }
        Ok(())
    }
}
