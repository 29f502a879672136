#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeDelta, Utc};
use pdwatch_core::codec::{AppendLog, DataStore, EventIndexRecord, SweepIndexRecord, UploadState};
use pdwatch_sync::notify::NotifyConfig;
use pdwatch_sync::wire::{sha256_hex, EventMeta, EventView, EVENT_HEADER, HASH_HEADER};
use pdwatch_sync::{spawn_server, ServerConfig, ServerHandle};
use uuid::Uuid;

pub fn any_port() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

pub fn fast_notify() -> NotifyConfig {
    NotifyConfig {
        base_delay: Duration::from_millis(5),
        max_delay: Duration::from_millis(20),
        max_attempts: 10,
        request_timeout: Duration::from_secs(2),
    }
}

pub fn serve(root: &Path) -> ServerHandle {
    let mut cfg = ServerConfig::new(root, any_port());
    cfg.notify = fast_notify();
    spawn_server(cfg).unwrap()
}

pub fn serve_at(root: &Path, addr: SocketAddr) -> ServerHandle {
    let mut cfg = ServerConfig::new(root, addr);
    cfg.notify = fast_notify();
    // the previous listener may linger briefly
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        match spawn_server(cfg.clone()) {
            Ok(h) => return h,
            Err(e) if Instant::now() < deadline => {
                let _ = e;
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(e) => panic!("{e}"),
        }
    }
}

pub fn t(ms: i64) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(1_714_564_800_000).unwrap() + TimeDelta::milliseconds(ms)
}

pub fn meta(event_id: Uuid, t0: DateTime<Utc>) -> EventMeta {
    EventMeta {
        event_id,
        t0,
        peak_freq_hz: 767.996e6,
        peak_power_dbm: -35.704,
        threshold_dbm: -50.0,
        sweep_id: Uuid::nil(),
        artifacts: vec!["a.iqf".into(), "a_spectrum.csv".into()],
    }
}

pub fn put(
    client: &reqwest::blocking::Client,
    base: &str,
    meta: Option<&EventMeta>,
    name: &str,
    body: &[u8],
    hash: &str,
) -> reqwest::blocking::Response {
    let id = meta.map_or(Uuid::nil(), |m| m.event_id);
    let mut req = client.put(format!("{base}/artifacts/{id}/{name}")).header(HASH_HEADER, hash).body(body.to_vec());
    if let Some(m) = meta {
        req = req.header(EVENT_HEADER, serde_json::to_string(m).unwrap());
    }
    req.send().unwrap()
}

pub fn upload_event(client: &reqwest::blocking::Client, base: &str, m: &EventMeta) {
    for name in &m.artifacts {
        let body = format!("{}:{name}", m.event_id).into_bytes();
        let r = put(client, base, Some(m), name, &body, &sha256_hex(&body));
        assert!(r.status().is_success(), "{}", r.status());
    }
}

pub fn events(client: &reqwest::blocking::Client, base: &str) -> Vec<EventView> {
    client.get(format!("{base}/events")).send().unwrap().json().unwrap()
}

pub fn wait_for(timeout: Duration, mut f: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    f()
}

/// Writes artifact files and index lines the way the scan loop does.
pub struct LocalSite {
    pub store: DataStore,
    events: AppendLog<EventIndexRecord>,
    sweeps: AppendLog<SweepIndexRecord>,
    n: i64,
}

impl LocalSite {
    pub fn new(dir: &Path) -> Self {
        let store = DataStore::open(dir).unwrap();
        let events = AppendLog::open(store.events_index()).unwrap();
        let sweeps = AppendLog::open(store.sweeps_index()).unwrap();
        Self { store, events, sweeps, n: 0 }
    }

    pub fn add_event(&mut self) -> EventIndexRecord {
        self.n += 1;
        let id = Uuid::new_v4();
        let iq = format!("events/pd_{}_{}kHz.iqf", self.n, 767_996);
        let sp = format!("events/pd_{}_{}kHz_spectrum.csv", self.n, 767_996);
        std::fs::write(self.store.resolve(&iq), format!("iq {id}").repeat(50)).unwrap();
        std::fs::write(self.store.resolve(&sp), format!("freq_hz,power_dbm\n{},-35.704\n", 767.996e6)).unwrap();
        let rec = EventIndexRecord {
            event_id: id,
            t0: t(self.n * 10),
            peak_freq_hz: 767.996e6,
            peak_power_dbm: -35.704,
            threshold_dbm: -50.0,
            sweep_id: Uuid::nil(),
            iq_path: iq,
            spectrum_path: sp,
            upload_state: UploadState::Pending,
        };
        self.events.append(&rec).unwrap();
        rec
    }

    pub fn add_sweep(&mut self) -> SweepIndexRecord {
        self.n += 1;
        let id = Uuid::new_v4();
        let rel = format!("sweeps/sweep_{}_{id}.csv", self.n);
        std::fs::write(self.store.resolve(&rel), format!("freq_hz,power_dbm\n100000000,-90.{}\n", self.n)).unwrap();
        let rec = SweepIndexRecord {
            sweep_id: id,
            t_start: t(self.n * 10),
            t_end: t(self.n * 10 + 5),
            complete: true,
            spectrum_path: rel,
            n_events: 0,
            failed_windows: vec![],
        };
        self.sweeps.append(&rec).unwrap();
        rec
    }
}
