mod common;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use common::*;
use pdwatch_core::codec::UploadState;
use pdwatch_sync::agent::{AgentConfig, RecordSource, RemoteError};
use pdwatch_sync::wire::{EventMeta, PutResponse, SweepMeta};
use pdwatch_sync::{Agent, HttpRemote, RemoteStore};
use rand::{Rng, SeedableRng};
use reqwest::blocking::Client;

fn cfg(dir: &std::path::Path) -> AgentConfig {
    let mut c = AgentConfig::new(dir);
    c.backoff_base = Duration::ZERO;
    c.backoff_cap = Duration::ZERO;
    c.jitter = false;
    c.poll_interval = Duration::from_millis(20);
    c
}

fn http(url: &str) -> HttpRemote {
    HttpRemote::new(url, None, Duration::from_secs(5)).unwrap()
}

/// Wraps a remote, failing the first `down` calls and optionally
/// corrupting bodies in flight.
struct Faulty<R> {
    inner: R,
    down: AtomicUsize,
    corrupt: AtomicBool,
    rng: Mutex<Option<rand_chacha::ChaCha8Rng>>,
    drop_rate: f64,
}

impl<R> Faulty<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            down: AtomicUsize::new(0),
            corrupt: AtomicBool::new(false),
            rng: Mutex::new(None),
            drop_rate: 0.0,
        }
    }

    fn fault(&self) -> Result<(), RemoteError> {
        if self.down.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |d| d.checked_sub(1)).is_ok() {
            return Err(RemoteError::Transport("connection refused".into()));
        }
        if let Some(rng) = self.rng.lock().unwrap().as_mut() {
            if rng.random::<f64>() < self.drop_rate {
                return Err(RemoteError::Transport("connection reset".into()));
            }
        }
        Ok(())
    }

    fn body(&self, body: &[u8]) -> Vec<u8> {
        let mut b = body.to_vec();
        if self.corrupt.load(Ordering::SeqCst) {
            b[0] ^= 0x40;
        }
        b
    }
}

impl<R: RemoteStore> RemoteStore for Faulty<R> {
    fn put_artifact(
        &self,
        meta: &EventMeta,
        filename: &str,
        body: &[u8],
        hash: &str,
    ) -> Result<PutResponse, RemoteError> {
        self.fault()?;
        self.inner.put_artifact(meta, filename, &self.body(body), hash)
    }

    fn put_spectrum(&self, meta: &SweepMeta, body: &[u8], hash: &str) -> Result<PutResponse, RemoteError> {
        self.fault()?;
        self.inner.put_spectrum(meta, &self.body(body), hash)
    }
}

#[test]
fn two_events_fan_out_to_four_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut site = LocalSite::new(dir.path());
    let srv = serve(&dir.path().join("remote"));
    let agent = Agent::open(cfg(dir.path()), http(&srv.url())).unwrap();
    site.add_event();
    site.add_event();
    assert_eq!(agent.watch().unwrap(), 4);
    assert_eq!(agent.watch().unwrap(), 0);
    let recs = agent.records();
    assert!(recs.iter().all(|r| r.state == UploadState::Pending && r.content_hash.len() == 64 && r.attempts == 0));
    let pass = agent.upload_due().unwrap();
    assert_eq!((pass.attempted, pass.acked), (4, 4));
    assert_eq!(events(&Client::new(), &srv.url()).len(), 2);
    assert_eq!(agent.status().acked, 4);
}

#[test]
fn sweeps_are_uploaded_as_latest_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let mut site = LocalSite::new(dir.path());
    let srv = serve(&dir.path().join("remote"));
    let agent = Agent::open(cfg(dir.path()), http(&srv.url())).unwrap();
    site.add_sweep();
    let last = site.add_sweep();
    agent.run_once().unwrap();
    let r = Client::new().get(format!("{}/spectrum/latest", srv.url())).send().unwrap();
    assert_eq!(r.headers()["x-sweep-id"].to_str().unwrap(), last.sweep_id.to_string());
    assert!(agent.records().iter().all(|r| matches!(r.source, RecordSource::Sweep(_))));
}

#[test]
fn restart_resumes_from_cursor_without_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let mut site = LocalSite::new(dir.path());
    let srv = serve(&dir.path().join("remote"));
    site.add_event();
    {
        let agent = Agent::open(cfg(dir.path()), http(&srv.url())).unwrap();
        agent.watch().unwrap();
    }
    site.add_event();
    let agent = Agent::open(cfg(dir.path()), http(&srv.url())).unwrap();
    assert_eq!(agent.records().len(), 2);
    assert_eq!(agent.watch().unwrap(), 2);
    agent.upload_due().unwrap();
    let agent = Agent::open(cfg(dir.path()), http(&srv.url())).unwrap();
    assert_eq!(agent.watch().unwrap(), 0);
    assert_eq!(agent.upload_due().unwrap().attempted, 0);
    assert_eq!(events(&Client::new(), &srv.url()).len(), 2);
}

#[test]
fn torn_index_line_waits_for_completion() {
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let mut site = LocalSite::new(dir.path());
    let rec = site.add_event();
    let srv = serve(&dir.path().join("remote"));
    let agent = Agent::open(cfg(dir.path()), http(&srv.url())).unwrap();
    assert_eq!(agent.watch().unwrap(), 2);
    let mut second = rec.clone();
    second.event_id = uuid::Uuid::new_v4();
    let line = serde_json::to_string(&second).unwrap();
    let (head, tail) = line.split_at(line.len() / 2);
    let path = site.store.events_index();
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(head.as_bytes()).unwrap();
    f.flush().unwrap();
    assert_eq!(agent.watch().unwrap(), 0);
    writeln!(f, "{tail}").unwrap();
    assert_eq!(agent.watch().unwrap(), 2);
}

#[test]
fn server_down_three_tries_then_acked_on_fourth() {
    let dir = tempfile::tempdir().unwrap();
    let mut site = LocalSite::new(dir.path());
    let srv = serve(&dir.path().join("remote"));
    let mut c = cfg(dir.path());
    c.workers = 1;
    let remote = Faulty::new(http(&srv.url()));
    remote.down.store(3, Ordering::SeqCst);
    let agent = Agent::open(c, remote).unwrap();
    let rec = site.add_event();
    std::fs::remove_file(site.store.resolve(&rec.spectrum_path)).unwrap();
    agent.watch().unwrap();
    // only the iq record is uploadable; its first three tries hit the outage
    for _ in 0..3 {
        agent.upload_due().unwrap();
    }
    let iq = |a: &Agent<_>| a.records().into_iter().find(|r| r.path == rec.iq_path).unwrap();
    assert_eq!(iq(&agent).state, UploadState::Pending);
    agent.upload_due().unwrap();
    let r = iq(&agent);
    assert_eq!((r.state, r.attempts), (UploadState::Acked, 4));
}

#[test]
fn corrupted_body_is_rejected_and_record_stays_pending() {
    let dir = tempfile::tempdir().unwrap();
    let mut site = LocalSite::new(dir.path());
    let srv = serve(&dir.path().join("remote"));
    let remote = Faulty::new(http(&srv.url()));
    remote.corrupt.store(true, Ordering::SeqCst);
    let agent = Agent::open(cfg(dir.path()), remote).unwrap();
    site.add_event();
    let pass = agent.run_once().unwrap();
    assert_eq!(pass.acked, 0);
    for r in agent.records() {
        assert_eq!(r.state, UploadState::Pending);
        assert!(r.last_error.unwrap().contains("hash_mismatch"));
    }
    assert!(events(&Client::new(), &srv.url()).is_empty());
}

#[test]
fn repeated_crashes_and_drops_converge_to_index_set() {
    let dir = tempfile::tempdir().unwrap();
    let mut site = LocalSite::new(dir.path());
    let srv = serve(&dir.path().join("remote"));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let mut local = BTreeSet::new();
    let mut seen_states = std::collections::HashMap::new();
    for round in 0..15 {
        for _ in 0..rng.random_range(0..4) {
            local.insert(site.add_event().event_id);
        }
        let mut remote = Faulty::new(http(&srv.url()));
        remote.drop_rate = 0.4;
        *remote.rng.lock().unwrap() = Some(rand_chacha::ChaCha8Rng::seed_from_u64(round));
        let agent = Agent::open(cfg(dir.path()), remote).unwrap();
        // state never regresses across restarts
        for r in agent.records() {
            let prev = seen_states.insert((r.id, r.path.clone()), (r.state, r.attempts));
            if let Some((s, a)) = prev {
                assert!(r.state >= s && r.attempts >= a);
            }
        }
        for _ in 0..rng.random_range(0..3) {
            agent.run_once().unwrap();
        }
        // dropped without shutdown, standing in for a kill
    }
    let agent = Agent::open(cfg(dir.path()), http(&srv.url())).unwrap();
    let stop = AtomicBool::new(false);
    let c = Client::new();
    std::thread::scope(|s| {
        s.spawn(|| agent.run(&stop).unwrap());
        let ok = wait_for(Duration::from_secs(30), || {
            let ids: Vec<_> = events(&c, &srv.url()).into_iter().map(|e| e.event_id).collect();
            ids.len() == local.len() && ids.iter().copied().collect::<BTreeSet<_>>() == local
        });
        stop.store(true, Ordering::SeqCst);
        assert!(ok);
    });
    let ids: Vec<_> = events(&c, &srv.url()).into_iter().map(|e| e.event_id).collect();
    assert_eq!(ids.len(), local.len());
}
