use serde::{Deserialize, Serialize};

use super::PowerSpectrum;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak<T = f64> {
    pub freq: f64,
    pub power_dbm: T,
}

/// Maximum-power bin; ties go to the lowest frequency. `None` for an empty
/// spectrum.
pub fn peak_search<T: Real>(spec: &PowerSpectrum<T>) -> Option<Peak<T>> {
    let mut best: Option<usize> = None;
    for (i, p) in spec.power_dbm.iter().enumerate() {
        match best {
            Some(b) if *p <= spec.power_dbm[b] => {}
            _ => best = Some(i),
        }
    }
    best.map(|i| Peak { freq: spec.bin_freqs[i], power_dbm: spec.power_dbm[i] })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Noise,
    Threshold,
}

/// `Threshold` iff the peak is strictly above the threshold.
pub fn classify<T: Real>(peak_power: T, threshold: T) -> Classification {
    if peak_power > threshold {
        Classification::Threshold
    } else {
        Classification::Noise
    }
}
