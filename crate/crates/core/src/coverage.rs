//! Detection probability for an intermittent emitter watched by a receiver
//! that only visits the emitter's window once per sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoverageError {
    #[error("invalid detection model: {0}")]
    Invalid(String),
    #[error("target probability is unreachable: per-sweep detection probability is zero")]
    Unreachable,
}

pub type Result<T, E = CoverageError> = std::result::Result<T, E>;

/// How pulses repeat in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PulseProcess<T = f64> {
    /// Exponential inter-arrival times at `rate` pulses per second.
    Poisson { rate: T },
    /// One pulse every `period` seconds with uniformly random phase.
    FixedPeriod { period: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel<T = f64> {
    pub process: PulseProcess<T>,
    pub dwell: T,
    pub n_windows: usize,
    /// Retune and processing time added to every window visit.
    pub overhead: T,
    pub n_sweeps: usize,
    /// Chance that a visit overlapping at least one pulse reports it.
    pub p_single: T,
}

impl<T: Real> DetectionModel<T> {
    pub fn poisson(rate: T, dwell: T, n_windows: usize, n_sweeps: usize) -> Result<Self> {
        let m = Self {
            process: PulseProcess::Poisson { rate },
            dwell,
            n_windows,
            overhead: T::zero(),
            n_sweeps,
            p_single: T::one(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn fixed_period(period: T, dwell: T, n_windows: usize, n_sweeps: usize) -> Result<Self> {
        let m = Self {
            process: PulseProcess::FixedPeriod { period },
            ..Self::poisson(T::one(), dwell, n_windows, n_sweeps)?
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoverageError::Invalid(m.to_string()));
        let pos = |v: T| v.is_finite() && v > T::zero();
        match self.process {
            PulseProcess::Poisson { rate } if !pos(rate) => return bad("pulse rate must be positive"),
            PulseProcess::FixedPeriod { period } if !pos(period) => return bad("pulse period must be positive"),
            _ => {}
        }
        if !pos(self.dwell) {
            return bad("dwell must be positive");
        }
        if self.n_windows == 0 {
            return bad("at least one window is required");
        }
        if self.n_sweeps == 0 {
            return bad("at least one sweep is required");
        }
        if !(self.overhead.is_finite() && self.overhead >= T::zero()) {
            return bad("overhead must be non-negative");
        }
        if !(self.p_single > T::zero() && self.p_single <= T::one()) {
            return bad("p_single must lie in (0, 1]");
        }
        Ok(())
    }

    /// Seconds between successive visits to the same window.
    pub fn revisit_period(&self) -> T {
        T::of(self.n_windows as f64) * (self.dwell + self.overhead)
    }

    /// Detection probability for a single visit.
    pub fn p_per_sweep(&self) -> T {
        let hit = match self.process {
            PulseProcess::Poisson { rate } => -(-(rate * self.dwell)).exp_m1(),
            PulseProcess::FixedPeriod { period } => (self.dwell / period).min(T::one()),
        };
        hit * self.p_single
    }

    pub fn with_sweeps(mut self, n_sweeps: usize) -> Self {
        self.n_sweeps = n_sweeps;
        self
    }
}

fn compound<T: Real>(p: T, visits: usize) -> T {
    if visits == 0 {
        return T::zero();
    }
    // 1 - (1-p)^m computed without cancellation for small p
    let m = T::of(visits as f64);
    if p >= T::one() {
        T::one()
    } else {
        -(m * (-p).ln_1p()).exp_m1()
    }
}

/// Probability of at least one detection over `n_sweeps` visits.
pub fn p_detect_analytic<T: Real>(model: &DetectionModel<T>) -> T {
    compound(model.p_per_sweep(), model.n_sweeps)
}

/// Probability of at least one detection within `horizon` seconds of
/// continuous sweeping. More windows mean fewer visits per second.
pub fn p_detect_by_time<T: Real>(model: &DetectionModel<T>, horizon: T) -> T {
    let visits = (horizon / model.revisit_period()).floor().to_usize().unwrap_or(0);
    compound(model.p_per_sweep(), visits)
}

/// Smallest sweep count whose cumulative detection probability reaches
/// `target_p`.
pub fn required_sweeps<T: Real>(model: &DetectionModel<T>, target_p: T) -> Result<usize> {
    if !(target_p > T::zero() && target_p < T::one()) {
        return Err(CoverageError::Invalid("target probability must lie in (0, 1)".into()));
    }
    let p = model.p_per_sweep().as_f64();
    let target = target_p.as_f64();
    if p <= 0.0 {
        return Err(CoverageError::Unreachable);
    }
    if p >= 1.0 {
        return Ok(1);
    }
    let est = ((-target).ln_1p() / (-p).ln_1p()).ceil().max(1.0);
    if !est.is_finite() || est > usize::MAX as f64 / 2.0 {
        return Err(CoverageError::Unreachable);
    }
    // the ceil-log estimate can land one off under rounding
    let reach = |m: usize| compound(p, m) >= target;
    let mut m = est as usize;
    while m > 1 && reach(m - 1) {
        m -= 1;
    }
    while !reach(m) {
        m += 1;
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: usize,
}

impl MonteCarloEstimate {
    /// Whether `value` lies within `k` standard errors. A zero standard
    /// error (all trials agree) only matches the same value.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        let tol = (k * self.stderr).max(1e-12);
        (self.estimate - value).abs() <= tol
    }
}

pub const MIN_TRIALS: usize = 10_000;

/// SplitMix64 step; derives independent trial seeds from the master seed.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Whether a fixed-period pulse train with first pulse at `phase` seconds
/// lands inside at least one visit of window `home`.
pub fn fixed_period_hits<T: Real>(model: &DetectionModel<T>, phase: f64, home: usize) -> Vec<bool> {
    let PulseProcess::FixedPeriod { period } = model.process else {
        return Vec::new();
    };
    let tp = period.as_f64();
    let (td, tr, slot) = schedule(model);
    (0..model.n_sweeps)
        .map(|k| {
            let open = k as f64 * tr + home as f64 * slot;
            let close = open + td;
            // first pulse at or after `open`
            let j = ((open - phase) / tp).ceil().max(0.0);
            phase + j * tp < close
        })
        .collect()
}

fn schedule<T: Real>(model: &DetectionModel<T>) -> (f64, f64, f64) {
    let td = model.dwell.as_f64();
    let slot = td + model.overhead.as_f64();
    (td, slot * model.n_windows as f64, slot)
}

fn trial<T: Real>(model: &DetectionModel<T>, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (td, tr, slot) = schedule(model);
    let p_single = model.p_single.as_f64();
    let home = rng.random_range(0..model.n_windows);
    let horizon = model.n_sweeps as f64 * tr;
    let visit = |k: usize| {
        let open = k as f64 * tr + home as f64 * slot;
        (open, open + td)
    };
    // per-visit: did any pulse land inside the dwell
    let mut active = vec![false; model.n_sweeps];
    match model.process {
        PulseProcess::Poisson { rate } => {
            let exp = Exp::new(rate.as_f64()).expect("validated rate");
            let mut t = exp.sample(&mut rng);
            while t < horizon {
                let k = (t / tr).floor() as usize;
                if k < model.n_sweeps {
                    let (open, close) = visit(k);
                    if t >= open && t < close {
                        active[k] = true;
                    }
                }
                t += exp.sample(&mut rng);
            }
        }
        PulseProcess::FixedPeriod { period } => {
            let phase = rng.random::<f64>() * period.as_f64();
            for (k, hit) in fixed_period_hits(model, phase, home).into_iter().enumerate() {
                active[k] = hit;
            }
        }
    }
    active.into_iter().any(|a| a && (p_single >= 1.0 || rng.random::<f64>() < p_single))
}

/// Simulate pulse arrivals against the sweep schedule and count trials
/// with at least one detection in the emitter's home window.
///
/// Results depend only on `seed` and `trials`, not on thread count.
pub fn p_detect_monte_carlo<T: Real>(
    model: &DetectionModel<T>,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    model.validate()?;
    if trials < MIN_TRIALS {
        return Err(CoverageError::Invalid(format!("at least {MIN_TRIALS} trials are required")));
    }
    let master = splitmix64(seed);
    let hits: usize =
        (0..trials as u64).into_par_iter().filter(|&i| trial(model, splitmix64(master ^ splitmix64(i)))).count();
    let n = trials as f64;
    let p = hits as f64 / n;
    Ok(MonteCarloEstimate { estimate: p, stderr: (p * (1.0 - p) / n).sqrt(), trials })
}
