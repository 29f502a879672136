use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::sync_channel;
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};
use uuid::Uuid;

use super::engine::{SweepEngine, SweepHooks, SweepResult, WindowReport};
use super::{Clock, SweepError, SweepPlan};
use crate::codec::{write_iqf, write_spectrum_csv, AppendLog, DataStore, EventIndexRecord, SweepIndexRecord};
use crate::scalar::Real;
use crate::sim::FrontEnd;

/// Sweeps waiting for the writer before acquisition blocks.
const PERSIST_QUEUE: usize = 2;
const IDLE_TICK: Duration = Duration::from_millis(10);

/// Shared state between the monitor loop and whoever steers it.
#[derive(Debug)]
pub struct MonitorControl {
    plan: RwLock<SweepPlan>,
    span_limit: Option<f64>,
    shutdown: AtomicBool,
    running: AtomicBool,
    alarm: Mutex<Option<String>>,
    sweeps: AtomicU64,
    events: AtomicU64,
}

impl MonitorControl {
    pub fn new(plan: SweepPlan) -> Result<Self, SweepError> {
        plan.validate()?;
        Ok(Self {
            plan: RwLock::new(plan),
            span_limit: None,
            shutdown: AtomicBool::new(false),
            running: AtomicBool::new(true),
            alarm: Mutex::new(None),
            sweeps: AtomicU64::new(0),
            events: AtomicU64::new(0),
        })
    }

    /// Reject plan updates whose span exceeds what the front end can deliver.
    pub fn with_span_limit(mut self, max_span: f64) -> Result<Self, SweepError> {
        let span = self.plan().span;
        if span > max_span {
            return Err(SweepError::Config(format!("span {span} Hz exceeds device limit {max_span} Hz")));
        }
        self.span_limit = Some(max_span);
        Ok(self)
    }

    pub fn plan(&self) -> SweepPlan {
        self.plan.read().expect("plan lock").clone()
    }

    /// Validate and install a modified plan; it takes effect at the next
    /// sweep boundary. On error the current plan is untouched.
    pub fn update_plan(&self, edit: impl FnOnce(&mut SweepPlan)) -> Result<SweepPlan, SweepError> {
        let mut guard = self.plan.write().expect("plan lock");
        let mut next = guard.clone();
        edit(&mut next);
        next.validate()?;
        if let Some(limit) = self.span_limit {
            if next.span > limit {
                return Err(SweepError::Config(format!("span {} Hz exceeds device limit {limit} Hz", next.span)));
            }
        }
        *guard = next.clone();
        Ok(next)
    }

    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }

    pub fn is_shutdown(&self) -> bool {
        self.shutdown.load(Ordering::SeqCst)
    }

    /// Stop acquiring after the current window; the loop idles until resumed.
    pub fn pause(&self) {
        self.running.store(false, Ordering::SeqCst);
    }

    pub fn resume(&self) {
        self.running.store(true, Ordering::SeqCst);
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::SeqCst)
    }

    pub fn alarm(&self) -> Option<String> {
        self.alarm.lock().expect("alarm lock").clone()
    }

    fn set_alarm(&self, msg: Option<String>) {
        *self.alarm.lock().expect("alarm lock") = msg;
    }

    pub fn sweeps_completed(&self) -> u64 {
        self.sweeps.load(Ordering::SeqCst)
    }

    pub fn events_detected(&self) -> u64 {
        self.events.load(Ordering::SeqCst)
    }

    fn interrupted(&self) -> bool {
        self.is_shutdown() || !self.is_running()
    }
}

/// Observer for the monitor loop, called on the acquisition thread.
pub trait MonitorObserver<T> {
    fn on_window(&mut self, _report: &WindowReport) {}
    fn on_sweep(&mut self, _result: &SweepResult<T>) {}
}

impl<T> MonitorObserver<T> for () {}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonitorSummary {
    pub sweeps: usize,
    pub partial_sweeps: usize,
    pub events: usize,
    pub persist_errors: Vec<String>,
}

struct Hooks<'a, T> {
    control: &'a MonitorControl,
    observer: &'a mut dyn MonitorObserver<T>,
}

impl<T> SweepHooks for Hooks<'_, T> {
    fn on_window(&mut self, report: &WindowReport) {
        self.observer.on_window(report);
    }

    fn should_stop(&self) -> bool {
        self.control.interrupted()
    }
}

fn sweep_csv_path(t_start: DateTime<Utc>, sweep_id: Uuid) -> String {
    format!("sweeps/sweep_{}_{}.csv", t_start.format("%Y%m%dT%H%M%S%.3fZ"), sweep_id)
}

/// Write one sweep's artifacts, then its index lines. Index lines are
/// appended only after the files they point at are on disk.
fn persist<T: Real>(
    store: &DataStore,
    events_log: &AppendLog<EventIndexRecord>,
    sweeps_log: &AppendLog<SweepIndexRecord>,
    result: &SweepResult<T>,
) -> Result<(), SweepError> {
    for r in &result.retained {
        write_iqf(&r.frame, store.resolve(&r.event.artifacts.iq_path))?;
        write_spectrum_csv(&r.spectrum, store.resolve(&r.event.artifacts.spectrum_path))?;
        events_log.append(&r.event.index_record())?;
    }
    if let Some(st) = &result.stitched {
        let rel = sweep_csv_path(st.t_start, st.sweep_id);
        write_spectrum_csv(st, store.resolve(&rel))?;
        sweeps_log.append(&SweepIndexRecord {
            sweep_id: st.sweep_id,
            t_start: st.t_start,
            t_end: st.t_end,
            complete: st.complete,
            spectrum_path: rel,
            n_events: result.events.len(),
            failed_windows: st.gaps.clone(),
        })?;
    }
    Ok(())
}

/// Sweep continuously until `iterations` complete sweeps have run (or
/// forever when `None`) or the control is shut down.
///
/// Persistence happens on a separate writer thread fed through a bounded
/// queue, so a slow disk eventually stalls acquisition instead of growing
/// memory. When the store passes its watermark the control raises an alarm
/// and acquisition waits for space.
pub fn run_monitor<T, D, C>(
    control: &MonitorControl,
    device: &mut D,
    clock: &mut C,
    store: &DataStore,
    iterations: Option<usize>,
    observer: &mut dyn MonitorObserver<T>,
) -> Result<MonitorSummary, SweepError>
where
    T: Real,
    D: FrontEnd + ?Sized,
    C: Clock + ?Sized,
{
    let events_log = AppendLog::<EventIndexRecord>::open(store.events_index())?;
    let sweeps_log = AppendLog::<SweepIndexRecord>::open(store.sweeps_index())?;
    let (tx, rx) = sync_channel::<SweepResult<T>>(PERSIST_QUEUE);
    let mut summary = MonitorSummary::default();

    let persist_errors = std::thread::scope(|s| -> Result<Vec<String>, SweepError> {
        let writer = s.spawn(|| {
            let mut errors = Vec::new();
            for result in rx {
                if let Err(e) = persist(store, &events_log, &sweeps_log, &result) {
                    tracing::error!("persisting sweep {}: {e}", result.sweep_id);
                    control.set_alarm(Some(format!("persist failed: {e}")));
                    errors.push(e.to_string());
                }
            }
            errors
        });

        let mut engine = SweepEngine::<T>::new();
        let outcome = (|| {
            while !control.is_shutdown() && iterations.is_none_or(|n| summary.sweeps < n) {
                if !control.is_running() {
                    std::thread::sleep(IDLE_TICK);
                    continue;
                }
                if store.is_full() {
                    if control.alarm().is_none() {
                        let msg = format!("data store full ({} bytes); acquisition paused", store.usage_bytes());
                        tracing::warn!("{msg}");
                        control.set_alarm(Some(msg));
                    }
                    std::thread::sleep(IDLE_TICK);
                    continue;
                }
                control.set_alarm(None);

                let plan = control.plan();
                let mut hooks = Hooks { control, observer: &mut *observer };
                let result = engine.run_sweep(&plan, device, clock, &mut hooks)?;
                observer.on_sweep(&result);
                summary.events += result.events.len();
                control.events.fetch_add(result.events.len() as u64, Ordering::SeqCst);
                let complete = result.complete;
                let t_start = result.stitched.as_ref().map(|s| s.t_start);
                if tx.send(result).is_err() {
                    break;
                }
                if !complete {
                    summary.partial_sweeps += 1;
                    continue;
                }
                summary.sweeps += 1;
                control.sweeps.fetch_add(1, Ordering::SeqCst);
                if let Some(t) = t_start {
                    let target = TimeDelta::nanoseconds((plan.sweep_period_target * 1e9) as i64);
                    clock.sleep_until(t + target, &|| control.interrupted());
                }
            }
            Ok(())
        })();
        drop(tx);
        let errors = writer.join().expect("writer thread panicked");
        outcome.map(|_| errors)
    })?;
    summary.persist_errors = persist_errors;
    Ok(summary)
}
