use serde::{Deserialize, Serialize};

use super::{DspError, Result};
use crate::scalar::Real;

/// One milliwatt in watts.
pub const MILLIWATT: f64 = 1e-3;

/// Calibration factor `C` mapping `I² + Q²` (volts²) to watts.
///
/// `C = 1` is the bare `(I² + Q²) / 1 mW` form. The default `C = 1/(2·50 Ω)`
/// reads a tone of envelope `A` volts as its power into a 50 Ω load.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CalConstant(f64);

impl CalConstant {
    pub const UNITY: CalConstant = CalConstant(1.0);
    pub const FIFTY_OHM: CalConstant = CalConstant(0.01);

    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Self(c))
        } else {
            Err(DspError::Argument(format!("calibration constant must be finite and > 0, got {c}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for CalConstant {
    fn default() -> Self {
        Self::FIFTY_OHM
    }
}

impl TryFrom<f64> for CalConstant {
    type Error = DspError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CalConstant> for f64 {
    fn from(c: CalConstant) -> f64 {
        c.0
    }
}

/// `10·log10((I² + Q²)·C / 1 mW)`; zero power maps to `-inf`.
pub fn power_dbm<T: Real>(i: T, q: T, cal: CalConstant) -> T {
    power_dbm_from_sq(i * i + q * q, cal)
}

pub(crate) fn power_dbm_from_sq<T: Real>(mag_sq: T, cal: CalConstant) -> T {
    if mag_sq <= T::zero() {
        return T::neg_infinity();
    }
    T::of(10.0) * (mag_sq * T::of(cal.get() / MILLIWATT)).log10()
}
