//! Sweep orchestration: window planning, per-window detection, stitching,
//! pruning and artifact naming, plus the long-running monitor loop.

mod clock;
mod engine;
mod monitor;
mod naming;
mod plan;
mod stitch;

pub use clock::{Clock, SimClock, SystemClock};
pub use engine::{format_window_line, PdEvent, RetainedFrame, SweepEngine, SweepHooks, SweepResult, WindowReport};
pub use monitor::{run_monitor, MonitorControl, MonitorObserver, MonitorSummary};
pub use naming::{artifact_stem, name_artifacts, ArtifactRefs};
pub use plan::{plan_windows, SweepPlan, TunedWindow};
pub use stitch::{stitch, StitchedSpectrum};

use crate::codec::CodecError;
use crate::dsp::DspError;
use crate::sim::DeviceError;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid sweep plan: {0}")]
    Config(String),
    #[error("no spectra to stitch")]
    EmptySweep,
    #[error("window {window} ({center_freq} Hz): {source}")]
    Window {
        window: usize,
        center_freq: f64,
        #[source]
        source: DeviceError,
    },
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Store(#[from] CodecError),
}
