//! One dwell's worth of quantized complex baseband samples.

use chrono::{DateTime, Utc};
use num_complex::Complex;

use crate::dsp::CalConstant;
use crate::scalar::Real;

/// Quantized IQ capture for a single tuned window.
///
/// Frequencies are stored at 1 Hz resolution and `full_scale` at 1 µV
/// resolution in the `.iqf` container; values produced by the sweep engine
/// already satisfy that.
#[derive(Clone, Debug, PartialEq)]
pub struct IqFrame {
    pub window_index: usize,
    pub center_freq: f64,
    pub span: f64,
    pub iq_rate: f64,
    /// Capture start, millisecond precision.
    pub t0: DateTime<Utc>,
    pub samples: Vec<Complex<i16>>,
    pub adc_bits: u8,
    /// Volts corresponding to ADC full scale (`2^(adc_bits-1)` counts).
    pub full_scale: f64,
    pub cal: CalConstant,
}

impl IqFrame {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Volts per ADC count.
    pub fn volts_per_count(&self) -> f64 {
        self.full_scale / f64::from(1u32 << (self.adc_bits - 1))
    }

    /// Dwell length in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.iq_rate
    }

    pub fn to_volts<T: Real>(&self) -> Vec<Complex<T>> {
        let scale = T::of(self.volts_per_count());
        self.samples
            .iter()
            .map(|s| Complex::new(T::of(f64::from(s.re)) * scale, T::of(f64::from(s.im)) * scale))
            .collect()
    }
}

/// Truncate a timestamp to whole milliseconds.
pub fn truncate_ms(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(t.timestamp_millis()).expect("in-range timestamp")
}
