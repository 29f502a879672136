//! Per-subscriber event notification with retry, dedupe and dead-lettering.

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use pdwatch_core::codec::AppendLog;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;
use uuid::Uuid;

use crate::server::write_json_atomic;
use crate::wire::{Delivery, EventView, NotificationPayload, Subscription};

#[derive(Clone, Debug)]
pub struct NotifyConfig {
    pub base_delay: Duration,
    pub max_delay: Duration,
    /// Attempts before a delivery is dead-lettered.
    pub max_attempts: u32,
    pub request_timeout: Duration,
}

impl Default for NotifyConfig {
    fn default() -> Self {
        Self {
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
            max_attempts: 10,
            request_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryStatus {
    Delivered,
    DeadLetter,
}

/// One line of `deliveries.jsonl` or `dead_letters.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub event_id: Uuid,
    pub subscriber_id: Uuid,
    pub status: DeliveryStatus,
    pub attempts: u32,
    pub last_error: Option<String>,
    pub at: DateTime<Utc>,
}

type Key = (Uuid, Uuid);

#[derive(Default)]
struct Ledger {
    delivered: HashSet<Key>,
    dead: HashSet<Key>,
    inflight: HashSet<Key>,
}

pub(crate) struct Notifier {
    root: PathBuf,
    cfg: NotifyConfig,
    runtime: tokio::runtime::Handle,
    client: reqwest::Client,
    subs: RwLock<Vec<Subscription>>,
    ledger: Mutex<Ledger>,
    deliveries: AppendLog<DeliveryRecord>,
    dead_letters: AppendLog<DeliveryRecord>,
    outbox: Mutex<()>,
}

fn describe(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Plain-text stand-in for an alert email.
pub fn outbox_message(e: &EventView) -> String {
    let mut s = format!(
        "Subject: New PD event at {:.3} MHz\nevent_id: {}\nt0: {}\npeak: {:.3} MHz, {:.3} dBm (threshold {:.1} dBm)\nartifacts:\n",
        e.peak_freq_hz / 1e6,
        e.event_id,
        e.t0.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        e.peak_freq_hz / 1e6,
        e.peak_power_dbm,
        e.threshold_dbm,
    );
    for a in &e.artifacts {
        s.push_str(&format!("  {}\n", a.url));
    }
    s.push_str("--\n");
    s
}

impl Notifier {
    pub(crate) async fn start(root: PathBuf, cfg: NotifyConfig) -> Result<Arc<Self>, String> {
        let subs_path = root.join("subscriptions.json");
        let subs: Vec<Subscription> = match tokio::fs::read(&subs_path).await {
            Ok(b) => serde_json::from_slice(&b).map_err(describe)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(describe(e)),
        };
        let deliveries = AppendLog::open(root.join("deliveries.jsonl")).map_err(describe)?;
        let dead_letters = AppendLog::open(root.join("dead_letters.jsonl")).map_err(describe)?;
        let mut ledger = Ledger::default();
        for r in AppendLog::<DeliveryRecord>::read_all(deliveries.path()).map_err(describe)? {
            ledger.delivered.insert((r.event_id, r.subscriber_id));
        }
        for r in AppendLog::<DeliveryRecord>::read_all(dead_letters.path()).map_err(describe)? {
            ledger.dead.insert((r.event_id, r.subscriber_id));
        }
        let client = reqwest::Client::builder().timeout(cfg.request_timeout).build().map_err(describe)?;
        Ok(Arc::new(Self {
            root,
            cfg,
            runtime: tokio::runtime::Handle::current(),
            client,
            subs: RwLock::new(subs),
            ledger: Mutex::new(ledger),
            deliveries,
            dead_letters,
            outbox: Mutex::new(()),
        }))
    }

    pub(crate) async fn subscribe(&self, target: Delivery) -> Result<(Subscription, bool), String> {
        let mut subs = self.subs.write().await;
        if let Some(s) = subs.iter().find(|s| s.target == target) {
            return Ok((s.clone(), false));
        }
        let sub = Subscription { id: Uuid::new_v4(), created_at: Utc::now(), target };
        let mut next = subs.clone();
        next.push(sub.clone());
        write_json_atomic(&self.root.join("subscriptions.json"), &next).await.map_err(describe)?;
        *subs = next;
        Ok((sub, true))
    }

    pub(crate) async fn subscriptions(&self) -> Vec<Subscription> {
        self.subs.read().await.clone()
    }

    /// (subscribers, successful deliveries, dead letters)
    pub(crate) async fn counts(&self) -> (usize, usize, usize) {
        let subs = self.subs.read().await.len();
        let l = self.ledger.lock().expect("ledger");
        (subs, l.delivered.len(), l.dead.len())
    }

    /// Fan an event out to every subscriber that existed when it arrived.
    pub(crate) fn enqueue(self: &Arc<Self>, event: EventView) {
        let this = self.clone();
        self.runtime.spawn(async move {
            let subs = this.subs.read().await.clone();
            for sub in subs.into_iter().filter(|s| s.created_at <= event.received_at) {
                let key = (event.event_id, sub.id);
                {
                    let mut l = this.ledger.lock().expect("ledger");
                    if l.delivered.contains(&key) || l.dead.contains(&key) || !l.inflight.insert(key) {
                        continue;
                    }
                }
                let this = this.clone();
                let event = event.clone();
                tokio::spawn(async move { this.deliver(event, sub).await });
            }
        });
    }

    async fn attempt(&self, event: &EventView, sub: &Subscription) -> Result<(), String> {
        match &sub.target {
            Delivery::Webhook { url } => {
                let payload = NotificationPayload {
                    event_id: event.event_id,
                    t0: event.t0,
                    peak_freq_hz: event.peak_freq_hz,
                    peak_power_dbm: event.peak_power_dbm,
                    artifact_urls: event.artifacts.iter().map(|a| a.url.clone()).collect(),
                };
                let resp = self.client.post(url).json(&payload).send().await.map_err(describe)?;
                if resp.status().is_success() {
                    Ok(())
                } else {
                    Err(format!("webhook answered {}", resp.status()))
                }
            }
            Delivery::Outbox { name } => {
                let path = self.root.join("outbox").join(name);
                let msg = outbox_message(event);
                let _g = self.outbox.lock().expect("outbox");
                let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path).map_err(describe)?;
                f.write_all(msg.as_bytes()).and_then(|_| f.sync_data()).map_err(describe)
            }
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1).min(30));
        self.cfg.base_delay.saturating_mul(factor).min(self.cfg.max_delay)
    }

    async fn deliver(self: Arc<Self>, event: EventView, sub: Subscription) {
        let key = (event.event_id, sub.id);
        let mut last_error = None;
        let mut attempts = 0;
        while attempts < self.cfg.max_attempts {
            attempts += 1;
            match self.attempt(&event, &sub).await {
                Ok(()) => {
                    last_error = None;
                    break;
                }
                Err(e) => {
                    tracing::warn!(event = %event.event_id, subscriber = %sub.id, attempts, "delivery failed: {e}");
                    last_error = Some(e);
                    if attempts < self.cfg.max_attempts {
                        tokio::time::sleep(self.backoff(attempts)).await;
                    }
                }
            }
        }
        let status = if last_error.is_none() { DeliveryStatus::Delivered } else { DeliveryStatus::DeadLetter };
        let record = DeliveryRecord {
            event_id: event.event_id,
            subscriber_id: sub.id,
            status,
            attempts,
            last_error,
            at: Utc::now(),
        };
        let log = match status {
            DeliveryStatus::Delivered => &self.deliveries,
            DeliveryStatus::DeadLetter => &self.dead_letters,
        };
        if let Err(e) = log.append(&record) {
            tracing::error!("recording delivery: {e}");
        }
        let mut l = self.ledger.lock().expect("ledger");
        l.inflight.remove(&key);
        match status {
            DeliveryStatus::Delivered => l.delivered.insert(key),
            DeliveryStatus::DeadLetter => l.dead.insert(key),
        };
    }
}
