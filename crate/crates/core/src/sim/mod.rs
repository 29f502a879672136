//! Simulated RF front-end standing in for the antenna and real-time
//! spectrum analyzer.
//!
//! Emitters are synthesized at complex baseband relative to the tuned
//! center, band-limited by an ideal brick-wall filter of width `span`,
//! summed with seeded AWGN and quantized to the configured ADC width.

mod device;
mod scene;

pub use device::{AntennaModel, FrontEnd, FrontEndConfig, SimDevice, MAX_TUNE_HZ};
pub use scene::{scene_power_at, Arrivals, Emitter, EmitterScene, SceneError};

use crate::dsp::DspError;

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("cannot tune to {freq} Hz (allowed (0, {MAX_TUNE_HZ}] Hz)")]
    Tune { freq: f64 },
    #[error("device state: {0}")]
    State(String),
    #[error("invalid front-end configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Received power of a tone of envelope `amplitude` volts into 50 Ω, in dBm.
pub fn tone_power_dbm(amplitude: f64) -> f64 {
    10.0 * (amplitude * amplitude / 100.0 / 1e-3).log10()
}

/// Envelope amplitude in volts that delivers `dbm` into 50 Ω.
pub fn tone_amplitude_for(dbm: f64) -> f64 {
    (100.0 * 1e-3 * 10f64.powf(dbm / 10.0)).sqrt()
}
