use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::power::power_dbm_from_sq;
use super::{is_power_of_two, CalConstant, DspError, Result};
use crate::frame::IqFrame;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    #[default]
    Rect,
    Hann,
}

impl WindowFn {
    fn coefficients<T: Real>(self, n: usize) -> Vec<T> {
        match self {
            WindowFn::Rect => vec![T::one(); n],
            // periodic form: coherent gain is exactly 1/2
            WindowFn::Hann => {
                (0..n).map(|i| T::of(0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))).collect()
            }
        }
    }
}

/// Averaged power spectrum of one tuned window, DC at `center_freq`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSpectrum<T = f64> {
    pub window_index: usize,
    pub center_freq: f64,
    pub span: f64,
    pub iq_rate: f64,
    /// Absolute RF frequency of each bin, ascending.
    pub bin_freqs: Vec<f64>,
    pub power_dbm: Vec<T>,
    pub n_fft: usize,
    /// Number of segment periodograms averaged.
    pub n_avg: usize,
}

impl<T: Real> PowerSpectrum<T> {
    pub fn len(&self) -> usize {
        self.bin_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bin_freqs.is_empty()
    }

    pub fn bin_width(&self) -> f64 {
        self.iq_rate / self.n_fft as f64
    }

    /// Lower and upper (exclusive) edge of the useful band.
    pub fn span_edges(&self) -> (f64, f64) {
        (self.center_freq - self.span / 2.0, self.center_freq + self.span / 2.0)
    }

    /// Keep only bins inside `[center − span/2, center + span/2)`.
    pub fn trimmed_to_span(&self) -> PowerSpectrum<T> {
        let (lo, hi) = self.span_edges();
        let eps = self.bin_width() * 1e-9;
        let keep: Vec<usize> =
            (0..self.len()).filter(|&i| self.bin_freqs[i] >= lo - eps && self.bin_freqs[i] < hi - eps).collect();
        PowerSpectrum {
            bin_freqs: keep.iter().map(|&i| self.bin_freqs[i]).collect(),
            power_dbm: keep.iter().map(|&i| self.power_dbm[i]).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> PowerSpectrum<T> {
        PowerSpectrum {
            window_index: self.window_index,
            center_freq: self.center_freq,
            span: self.span,
            iq_rate: self.iq_rate,
            bin_freqs: Vec::new(),
            power_dbm: Vec::new(),
            n_fft: self.n_fft,
            n_avg: self.n_avg,
        }
    }
}

/// Welch-style estimator with a cached FFT plan.
///
/// Averages `floor(len / n_fft)` non-overlapping segment periodograms and
/// scales each bin to the envelope amplitude `|X[k]| / (n_fft · coherent_gain)`
/// before the dBm conversion, so an on-bin tone of envelope `A` reads `A²·C`.
pub struct SpectrumAnalyzer<T: Real = f64> {
    n_fft: usize,
    window: WindowFn,
    coeffs: Vec<T>,
    coherent_gain: T,
    fft: Arc<dyn Fft<T>>,
    buf: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
    acc: Vec<T>,
}

impl<T: Real> SpectrumAnalyzer<T> {
    pub fn new(n_fft: usize, window: WindowFn) -> Result<Self> {
        if !is_power_of_two(n_fft) {
            return Err(DspError::Argument(format!("n_fft must be a power of two, got {n_fft}")));
        }
        let coeffs: Vec<T> = window.coefficients(n_fft);
        let coherent_gain = coeffs.iter().copied().sum::<T>() / T::of(n_fft as f64);
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        let scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
        Ok(Self {
            n_fft,
            window,
            coeffs,
            coherent_gain,
            fft,
            buf: vec![Complex::new(T::zero(), T::zero()); n_fft],
            scratch,
            acc: vec![T::zero(); n_fft],
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn window(&self) -> WindowFn {
        self.window
    }

    pub fn analyze_frame(&mut self, frame: &IqFrame) -> Result<PowerSpectrum<T>> {
        let scale = T::of(frame.volts_per_count());
        let samples = &frame.samples;
        let n_avg = self.accumulate(samples.len(), |off, buf, coeffs| {
            for ((dst, s), w) in buf.iter_mut().zip(&samples[off..]).zip(coeffs) {
                let k = scale * *w;
                *dst = Complex::new(T::of(f64::from(s.re)) * k, T::of(f64::from(s.im)) * k);
            }
        })?;
        Ok(self.finish(n_avg, frame.window_index, frame.center_freq, frame.span, frame.iq_rate, frame.cal))
    }

    /// Same estimate for samples already in volts.
    pub fn analyze_volts(
        &mut self,
        samples: &[Complex<T>],
        center_freq: f64,
        span: f64,
        iq_rate: f64,
        cal: CalConstant,
    ) -> Result<PowerSpectrum<T>> {
        let n_avg = self.accumulate(samples.len(), |off, buf, coeffs| {
            for ((dst, s), w) in buf.iter_mut().zip(&samples[off..]).zip(coeffs) {
                *dst = *s * *w;
            }
        })?;
        Ok(self.finish(n_avg, 0, center_freq, span, iq_rate, cal))
    }

    fn accumulate(&mut self, len: usize, fill: impl Fn(usize, &mut [Complex<T>], &[T])) -> Result<usize> {
        if len < self.n_fft {
            return Err(DspError::Argument(format!("frame of {len} samples shorter than n_fft {}", self.n_fft)));
        }
        let segments = len / self.n_fft;
        self.acc.iter_mut().for_each(|a| *a = T::zero());
        for seg in 0..segments {
            fill(seg * self.n_fft, &mut self.buf, &self.coeffs);
            self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
            for (a, x) in self.acc.iter_mut().zip(&self.buf) {
                *a += x.norm_sqr();
            }
        }
        Ok(segments)
    }

    fn finish(
        &self,
        n_avg: usize,
        window_index: usize,
        center_freq: f64,
        span: f64,
        iq_rate: f64,
        cal: CalConstant,
    ) -> PowerSpectrum<T> {
        let n = self.n_fft;
        let norm = T::of(n as f64) * self.coherent_gain;
        let denom = norm * norm * T::of(n_avg as f64);
        let df = iq_rate / n as f64;
        let half = n / 2;
        let mut bin_freqs = Vec::with_capacity(n);
        let mut power = Vec::with_capacity(n);
        // FFT index (j + n/2) mod n lands at output position j
        for j in 0..n {
            let k = (j + half) % n;
            bin_freqs.push(center_freq + (j as f64 - half as f64) * df);
            power.push(power_dbm_from_sq(self.acc[k] / denom, cal));
        }
        PowerSpectrum { window_index, center_freq, span, iq_rate, bin_freqs, power_dbm: power, n_fft: n, n_avg }
    }
}

/// One-shot convenience around [`SpectrumAnalyzer`].
pub fn spectrum_from_frame<T: Real>(frame: &IqFrame, n_fft: usize, window: WindowFn) -> Result<PowerSpectrum<T>> {
    SpectrumAnalyzer::new(n_fft, window)?.analyze_frame(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    fn tone(n: usize, bin: i64, n_fft: usize, amp: f64) -> Vec<Complex<f64>> {
        (0..n)
            .map(|i| Complex::from_polar(amp, 2.0 * std::f64::consts::PI * bin as f64 * i as f64 / n_fft as f64))
            .collect()
    }

    #[test]
    fn on_bin_tone_reads_closed_form_power() {
        let n_fft = 1024;
        let amp = 0.25;
        let x = tone(4 * n_fft, 37, n_fft, amp);
        let mut an = SpectrumAnalyzer::<f64>::new(n_fft, WindowFn::Rect).unwrap();
        let s = an.analyze_volts(&x, 100e6, 1e6, 1e6, CalConstant::FIFTY_OHM).unwrap();
        assert_eq!(s.n_avg, 4);
        let want = 10.0 * (amp * amp * 0.01 / 1e-3).log10();
        let peak = s.power_dbm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let idx = s.power_dbm.iter().position(|&p| p == peak).unwrap();
        assert!((peak - want).abs() < 0.01);
        assert!((s.bin_freqs[idx] - (100e6 + 37.0 * 1e6 / 1024.0)).abs() < 1e-6);
        for (i, p) in s.power_dbm.iter().enumerate() {
            if i != idx {
                assert!(*p < -200.0, "bin {i} leaked {p}");
            }
        }
    }

    #[test]
    fn hann_window_preserves_on_bin_amplitude() {
        let n_fft = 256;
        let x = tone(n_fft * 2, -20, n_fft, 1.0);
        let mut an = SpectrumAnalyzer::<f64>::new(n_fft, WindowFn::Hann).unwrap();
        let s = an.analyze_volts(&x, 0.0, 1.0, 1.0, CalConstant::UNITY).unwrap();
        let peak = s.power_dbm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((peak - 30.0).abs() < 1e-9);
    }

    #[test]
    fn zero_frame_is_all_negative_infinity() {
        let frame = IqFrame {
            window_index: 3,
            center_freq: 300e6,
            span: 4e6,
            iq_rate: 4e6,
            t0: Utc::now(),
            samples: vec![Complex::new(0, 0); 2048],
            adc_bits: 16,
            full_scale: 1.0,
            cal: CalConstant::FIFTY_OHM,
        };
        let s: PowerSpectrum<f32> = spectrum_from_frame(&frame, 512, WindowFn::Rect).unwrap();
        assert_eq!(s.window_index, 3);
        assert!(s.power_dbm.iter().all(|p| *p == f32::NEG_INFINITY));
    }

    #[test]
    fn bin_axis_is_centered_and_increasing() {
        let x = vec![Complex::new(0.0f64, 0.0); 16];
        let s = SpectrumAnalyzer::new(8, WindowFn::Rect)
            .unwrap()
            .analyze_volts(&x, 1000.0, 8.0, 8.0, CalConstant::UNITY)
            .unwrap();
        assert_eq!(s.bin_freqs, vec![996.0, 997.0, 998.0, 999.0, 1000.0, 1001.0, 1002.0, 1003.0]);
        let t = s.trimmed_to_span();
        assert_eq!(t.bin_freqs.len(), 8);
        let narrow = PowerSpectrum { span: 4.0, ..s };
        assert_eq!(narrow.trimmed_to_span().bin_freqs, vec![998.0, 999.0, 1000.0, 1001.0]);
    }

    #[test]
    fn short_frame_rejected() {
        let mut an = SpectrumAnalyzer::<f64>::new(64, WindowFn::Rect).unwrap();
        let x = vec![Complex::new(0.0, 0.0); 63];
        assert!(an.analyze_volts(&x, 0.0, 1.0, 1.0, CalConstant::UNITY).is_err());
        assert!(SpectrumAnalyzer::<f64>::new(100, WindowFn::Rect).is_err());
    }
}
