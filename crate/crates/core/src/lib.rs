//! Swept-spectrum partial-discharge detection: simulated RF front end,
//! spectral detection, sweep orchestration, artifact storage and coverage
//! analysis.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the common choices. Frequencies are always `f64`.

pub mod codec;
pub mod coverage;
pub mod dsp;
pub mod frame;
pub mod scalar;
pub mod sim;
pub mod sweep;

pub use codec::{CodecError, DataStore};
pub use coverage::{p_detect_analytic, p_detect_monte_carlo, required_sweeps, DetectionModel, PulseProcess};
pub use dsp::{CalConstant, PowerSpectrum, SpectrumAnalyzer, WindowFn};
pub use frame::IqFrame;
pub use scalar::Real;
pub use sim::{EmitterScene, FrontEnd, FrontEndConfig, SimDevice};
pub use sweep::{MonitorControl, PdEvent, StitchedSpectrum, SweepEngine, SweepPlan, SweepResult};

pub type Spectrum32 = PowerSpectrum<f32>;
pub type Spectrum64 = PowerSpectrum<f64>;
pub type Stitched32 = StitchedSpectrum<f32>;
pub type Stitched64 = StitchedSpectrum<f64>;
pub type Engine32 = SweepEngine<f32>;
pub type Engine64 = SweepEngine<f64>;
pub type DetectionModel64 = DetectionModel<f64>;
