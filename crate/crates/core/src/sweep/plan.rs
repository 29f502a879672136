use serde::{Deserialize, Serialize};

use super::SweepError;
use crate::dsp::{is_power_of_two, WindowFn};

/// Scan configuration. Defaults reproduce the 100–2500 MHz sweep in 40 MHz
/// steps with 10 ms dwells and a −50 dBm threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepPlan {
    pub f_start: f64,
    pub f_stop: f64,
    pub step: f64,
    pub span: f64,
    /// Seconds per window.
    pub dwell: f64,
    pub threshold_dbm: f64,
    pub n_fft: usize,
    pub window_fn: WindowFn,
    /// Nominal sweep period; the engine idles out the remainder of a sweep
    /// that finishes early.
    pub sweep_period_target: f64,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            f_start: 100e6,
            f_stop: 2500e6,
            step: 40e6,
            span: 40e6,
            dwell: 0.010,
            threshold_dbm: -50.0,
            n_fft: 8192,
            window_fn: WindowFn::Rect,
            sweep_period_target: 0.600,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunedWindow {
    pub index: usize,
    pub center_freq: f64,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::Config(m));
        let finite =
            [self.f_start, self.f_stop, self.step, self.span, self.dwell, self.threshold_dbm, self.sweep_period_target];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all plan values must be finite".into());
        }
        if self.f_start <= 0.0 || self.f_start >= self.f_stop {
            return bad(format!("need 0 < f_start < f_stop, got {} .. {}", self.f_start, self.f_stop));
        }
        if self.step <= 0.0 || self.span <= 0.0 || self.dwell <= 0.0 {
            return bad("step, span and dwell must be > 0".into());
        }
        if !is_power_of_two(self.n_fft) {
            return bad(format!("n_fft must be a power of two, got {}", self.n_fft));
        }
        if self.sweep_period_target < 0.0 {
            return bad("sweep_period_target must be >= 0".into());
        }
        Ok(())
    }

    /// `floor((f_stop − f_start) / step) + 1`.
    pub fn window_count(&self) -> usize {
        ((self.f_stop - self.f_start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn center(&self, index: usize) -> f64 {
        self.f_start + index as f64 * self.step
    }
}

/// Ordered tuned windows `f_start, f_start + step, …` up to `f_stop`.
pub fn plan_windows(plan: &SweepPlan) -> Result<Vec<TunedWindow>, SweepError> {
    plan.validate()?;
    Ok((0..plan.window_count()).map(|index| TunedWindow { index, center_freq: plan.center(index) }).collect())
}
