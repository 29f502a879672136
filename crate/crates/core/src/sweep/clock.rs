use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};

/// Time source for the sweep loop.
pub trait Clock: Send {
    fn now(&mut self) -> DateTime<Utc>;

    /// Called after an acquisition that began at `started`; returns once at
    /// least `dwell` seconds have passed since then.
    fn pace(&mut self, started: DateTime<Utc>, dwell: f64);

    /// Idle until `deadline`, returning early when `stop` reports true.
    fn sleep_until(&mut self, deadline: DateTime<Utc>, stop: &dyn Fn() -> bool);
}

fn secs(d: f64) -> TimeDelta {
    TimeDelta::nanoseconds((d * 1e9).round() as i64)
}

/// Wall clock. Pacing makes a simulated device take real dwell time.
#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&mut self) -> DateTime<Utc> {
        Utc::now()
    }

    fn pace(&mut self, started: DateTime<Utc>, dwell: f64) {
        if let Ok(left) = (started + secs(dwell) - Utc::now()).to_std() {
            std::thread::sleep(left);
        }
    }

    fn sleep_until(&mut self, deadline: DateTime<Utc>, stop: &dyn Fn() -> bool) {
        const TICK: Duration = Duration::from_millis(5);
        while !stop() {
            match (deadline - Utc::now()).to_std() {
                Ok(left) if !left.is_zero() => std::thread::sleep(left.min(TICK)),
                _ => break,
            }
        }
    }
}

/// Virtual clock: acquisitions and idle periods advance time instantly.
#[derive(Clone, Copy, Debug)]
pub struct SimClock {
    now: DateTime<Utc>,
}

impl SimClock {
    pub fn starting_at(now: DateTime<Utc>) -> Self {
        Self { now }
    }
}

impl Clock for SimClock {
    fn now(&mut self) -> DateTime<Utc> {
        self.now
    }

    fn pace(&mut self, started: DateTime<Utc>, dwell: f64) {
        self.now = self.now.max(started + secs(dwell));
    }

    fn sleep_until(&mut self, deadline: DateTime<Utc>, _stop: &dyn Fn() -> bool) {
        self.now = self.now.max(deadline);
    }
}
