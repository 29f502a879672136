//! Spectral math: transforms, dBm conversion, averaged periodograms, peak
//! search and threshold classification.
//!
//! Everything here is a pure function of its inputs and generic over the
//! sample precision.

mod detect;
mod fft;
mod power;
mod spectrum;

pub use detect::{classify, peak_search, Classification, Peak};
pub use fft::{dft_naive, fft, ifft_in_place, is_power_of_two};
pub use power::{power_dbm, CalConstant, MILLIWATT};
pub use spectrum::{spectrum_from_frame, PowerSpectrum, SpectrumAnalyzer, WindowFn};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DspError {
    #[error("argument error: {0}")]
    Argument(String),
}

pub type Result<T, E = DspError> = std::result::Result<T, E>;
