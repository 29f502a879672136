use chrono::{DateTime, Utc};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::scene::{Arrivals, Emitter, EmitterScene};
use super::{tone_amplitude_for, DeviceError};
use crate::dsp::CalConstant;
use crate::frame::{truncate_ms, IqFrame};

/// Highest tunable center frequency.
pub const MAX_TUNE_HZ: f64 = 3e9;

type C64 = Complex<f64>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AntennaModel {
    #[default]
    Flat,
    /// Second-order Butterworth magnitude response around `center_hz`.
    Bandpass { center_hz: f64, bandwidth_hz: f64 },
}

impl AntennaModel {
    pub fn gain(&self, freq: f64) -> f64 {
        match *self {
            AntennaModel::Flat => 1.0,
            AntennaModel::Bandpass { center_hz, bandwidth_hz } => {
                let x = (freq - center_hz) / (bandwidth_hz / 2.0);
                1.0 / (1.0 + x.powi(4)).sqrt()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontEndConfig {
    /// Complex samples per second.
    pub iq_rate: f64,
    pub span: f64,
    pub adc_bits: u8,
    /// Volts at ADC full scale.
    pub full_scale: f64,
    pub antenna: AntennaModel,
    pub cal: CalConstant,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        Self {
            iq_rate: 56e6,
            span: 40e6,
            adc_bits: 16,
            full_scale: 0.1,
            antenna: AntennaModel::Flat,
            cal: CalConstant::FIFTY_OHM,
        }
    }
}

impl FrontEndConfig {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.iq_rate > 0.0 && self.iq_rate.is_finite()) {
            return Err(DeviceError::Config(format!("iq_rate must be > 0, got {}", self.iq_rate)));
        }
        if !(self.span > 0.0 && self.span <= self.iq_rate) {
            return Err(DeviceError::Config(format!("span {} must be in (0, iq_rate = {}]", self.span, self.iq_rate)));
        }
        if !(8..=16).contains(&self.adc_bits) {
            return Err(DeviceError::Config(format!("adc_bits must be in [8, 16], got {}", self.adc_bits)));
        }
        if !(self.full_scale > 0.0 && self.full_scale.is_finite()) {
            return Err(DeviceError::Config(format!("full_scale must be > 0, got {}", self.full_scale)));
        }
        if let AntennaModel::Bandpass { bandwidth_hz, .. } = self.antenna {
            if bandwidth_hz <= 0.0 {
                return Err(DeviceError::Config("antenna bandwidth must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// A tunable IQ source.
pub trait FrontEnd: Send {
    fn tune(&mut self, center_freq: f64) -> Result<(), DeviceError>;

    /// Capture `floor(dwell × iq_rate)` samples starting at `t0`.
    fn acquire(&mut self, dwell: f64, t0: DateTime<Utc>) -> Result<IqFrame, DeviceError>;

    fn config(&self) -> &FrontEndConfig;

    /// Change the analysis span; must not exceed the IQ rate.
    fn set_span(&mut self, span: f64) -> Result<(), DeviceError>;
}

/// Scene-driven front-end. One PRNG stream per instance, so a given scene,
/// seed and call sequence always yields the same frames.
pub struct SimDevice {
    scene: EmitterScene,
    config: FrontEndConfig,
    rng: ChaCha8Rng,
    center: Option<f64>,
    last_pulse_counts: Vec<usize>,
}

pub(crate) fn sample_count(dwell: f64, iq_rate: f64) -> usize {
    // tolerate 0.01 × 4e6 = 39999.999…
    (dwell * iq_rate * (1.0 + 1e-12)).floor() as usize
}

impl SimDevice {
    pub fn new(scene: EmitterScene, config: FrontEndConfig) -> Result<Self, DeviceError> {
        config.validate()?;
        scene.validate().map_err(|e| DeviceError::Config(e.to_string()))?;
        let rng = ChaCha8Rng::seed_from_u64(scene.seed);
        Ok(Self { scene, config, rng, center: None, last_pulse_counts: Vec::new() })
    }

    pub fn scene(&self) -> &EmitterScene {
        &self.scene
    }

    pub fn center_freq(&self) -> Option<f64> {
        self.center
    }

    /// Pulses generated per pulse-train emitter (scene order) in the most
    /// recent acquisition.
    pub fn last_pulse_counts(&self) -> &[usize] {
        &self.last_pulse_counts
    }

    /// Analytic power of the strongest emitter at `freq` as seen through
    /// the antenna model.
    pub fn expected_power_at(&self, freq: f64) -> f64 {
        let base = super::scene_power_at(&self.scene, freq);
        base + 20.0 * self.config.antenna.gain(freq).log10()
    }

    /// The band-limited baseband waveform in volts, before quantization.
    pub fn acquire_analog(&mut self, dwell: f64, t0: DateTime<Utc>) -> Result<Vec<C64>, DeviceError> {
        let center = self.center.ok_or_else(|| DeviceError::State("device not tuned".into()))?;
        if !(dwell > 0.0 && dwell.is_finite()) {
            return Err(DeviceError::State(format!("dwell must be > 0, got {dwell}")));
        }
        let fs = self.config.iq_rate;
        let n = sample_count(dwell, fs);
        if n == 0 {
            return Err(DeviceError::State(format!("dwell {dwell} s yields no samples at {fs} S/s")));
        }
        let (lo, hi) = (-self.config.span / 2.0, self.config.span / 2.0);
        let in_span = |df: f64| df >= lo && df < hi;
        let t0_s = t0.timestamp_millis() as f64 / 1000.0;

        let mut out = vec![C64::new(0.0, 0.0); n];
        // frequency-domain accumulator for everything that needs ideal band-limiting
        let mut spectral: Option<Vec<C64>> = None;
        self.last_pulse_counts.clear();

        for e in &self.scene.emitters {
            let (s_lo, s_hi) = e.support();
            let intersects = s_hi - center >= lo && s_lo - center < hi;
            if !intersects {
                if matches!(e, Emitter::PdPulseTrain { .. }) {
                    self.last_pulse_counts.push(0);
                }
                continue;
            }
            let gain = e.path_gain();
            match *e {
                Emitter::Cw { freq_hz, amplitude_v, phase_rad, .. } => {
                    let df = freq_hz - center;
                    if in_span(df) {
                        let a = amplitude_v * gain * self.config.antenna.gain(freq_hz);
                        add_tone(&mut out, a, phase_rad, df / fs);
                    }
                }
                Emitter::Burst { center_freq_hz, duty_cycle, burst_len_s, power_dbm, .. } => {
                    let a = tone_amplitude_for(power_dbm) * gain * self.config.antenna.gain(center_freq_hz);
                    let df = center_freq_hz - center;
                    if duty_cycle >= 1.0 {
                        if in_span(df) {
                            add_tone(&mut out, a, 0.0, df / fs);
                        }
                    } else {
                        let period = burst_len_s / duty_cycle;
                        let base = t0_s.rem_euclid(period);
                        let mut gated = vec![C64::new(0.0, 0.0); n];
                        add_tone(&mut gated, a, 0.0, df / fs);
                        for (k, z) in gated.iter_mut().enumerate() {
                            if (base + k as f64 / fs).rem_euclid(period) >= burst_len_s {
                                *z = C64::new(0.0, 0.0);
                            }
                        }
                        FftPlanner::new().plan_fft_forward(n).process(&mut gated);
                        let acc = spectral.get_or_insert_with(|| vec![C64::new(0.0, 0.0); n]);
                        for (b, (dst, src)) in acc.iter_mut().zip(&gated).enumerate() {
                            if in_span(bin_offset(b, n, fs)) {
                                *dst += *src;
                            }
                        }
                    }
                }
                Emitter::PdPulseTrain {
                    center_freq_hz, bandwidth_hz, repetition_hz, arrivals, pulse_peak_v, ..
                } => {
                    let times = pulse_times(&mut self.rng, arrivals, repetition_hz, t0_s, n as f64 / fs);
                    self.last_pulse_counts.push(times.len());
                    if times.is_empty() {
                        continue;
                    }
                    let tau = 1.0 / (std::f64::consts::PI * bandwidth_hz);
                    let df_c = center_freq_hz - center;
                    let acc = spectral.get_or_insert_with(|| vec![C64::new(0.0, 0.0); n]);
                    for (b, dst) in acc.iter_mut().enumerate() {
                        let f = bin_offset(b, n, fs);
                        let abs_f = center + f;
                        if !in_span(f) || abs_f < s_lo || abs_f > s_hi {
                            continue;
                        }
                        // FT of V·e^(−t/τ)·e^(j(2πΔf·t − π/2)) for t ≥ 0, sampled at fs
                        let v = pulse_peak_v * gain * self.config.antenna.gain(abs_f);
                        let shape =
                            C64::new(0.0, -v * tau) / C64::new(1.0, 2.0 * std::f64::consts::PI * (f - df_c) * tau);
                        let mut phase_sum = C64::new(0.0, 0.0);
                        for &tk in &times {
                            phase_sum += C64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * tk);
                        }
                        *dst += shape * phase_sum * fs;
                    }
                }
            }
        }

        let n0 = self.scene.noise_density_w_hz();
        if n0 > 0.0 {
            let band_limited = self.config.span < fs;
            // per-sample complex variance in volts² such that |z|²·C integrates to N0 × bandwidth
            let bw = if band_limited { fs } else { self.config.span };
            let sigma = (n0 * bw / self.config.cal.get() / 2.0).sqrt();
            let mut noise: Vec<C64> = (0..n)
                .map(|_| {
                    let re: f64 = self.rng.sample(StandardNormal);
                    let im: f64 = self.rng.sample(StandardNormal);
                    C64::new(re * sigma, im * sigma)
                })
                .collect();
            if band_limited {
                FftPlanner::new().plan_fft_forward(n).process(&mut noise);
                let acc = spectral.get_or_insert_with(|| vec![C64::new(0.0, 0.0); n]);
                for (b, (dst, src)) in acc.iter_mut().zip(&noise).enumerate() {
                    if in_span(bin_offset(b, n, fs)) {
                        *dst += *src;
                    }
                }
            } else {
                for (o, z) in out.iter_mut().zip(&noise) {
                    *o += *z;
                }
            }
        }

        if let Some(mut spec) = spectral {
            crate::dsp::ifft_in_place(&mut spec);
            let inv = 1.0 / n as f64;
            for (o, z) in out.iter_mut().zip(&spec) {
                *o += *z * inv;
            }
        }
        Ok(out)
    }

    /// Quantize volts to signed ADC counts with saturation.
    pub fn quantize(&self, v: &[C64]) -> Vec<Complex<i16>> {
        let max = f64::from(1u32 << (self.config.adc_bits - 1));
        let per_volt = max / self.config.full_scale;
        let q = |x: f64| (x * per_volt).round().clamp(-max, max - 1.0) as i16;
        v.iter().map(|z| Complex::new(q(z.re), q(z.im))).collect()
    }
}

impl FrontEnd for SimDevice {
    fn tune(&mut self, center_freq: f64) -> Result<(), DeviceError> {
        if !(center_freq > 0.0 && center_freq <= MAX_TUNE_HZ) {
            return Err(DeviceError::Tune { freq: center_freq });
        }
        self.center = Some(center_freq);
        Ok(())
    }

    fn acquire(&mut self, dwell: f64, t0: DateTime<Utc>) -> Result<IqFrame, DeviceError> {
        let volts = self.acquire_analog(dwell, t0)?;
        Ok(IqFrame {
            window_index: 0,
            center_freq: self.center.expect("checked by acquire_analog"),
            span: self.config.span,
            iq_rate: self.config.iq_rate,
            t0: truncate_ms(t0),
            samples: self.quantize(&volts),
            adc_bits: self.config.adc_bits,
            full_scale: self.config.full_scale,
            cal: self.config.cal,
        })
    }

    fn config(&self) -> &FrontEndConfig {
        &self.config
    }

    fn set_span(&mut self, span: f64) -> Result<(), DeviceError> {
        let cfg = FrontEndConfig { span, ..self.config.clone() };
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }
}

/// Signed baseband frequency of DFT bin `b`.
fn bin_offset(b: usize, n: usize, fs: f64) -> f64 {
    let signed = if b < n.div_ceil(2) { b as f64 } else { b as f64 - n as f64 };
    signed * fs / n as f64
}

/// `out[k] += a·e^(j(φ + 2π·cycles_per_sample·k))`, phase reduced per sample.
fn add_tone(out: &mut [C64], a: f64, phase: f64, cycles_per_sample: f64) {
    for (k, z) in out.iter_mut().enumerate() {
        let x = cycles_per_sample * k as f64;
        let frac = x - x.floor();
        *z += C64::from_polar(a, phase + 2.0 * std::f64::consts::PI * frac);
    }
}

/// Pulse arrival offsets (seconds from frame start) within `[0, dwell)`.
fn pulse_times(rng: &mut ChaCha8Rng, arrivals: Arrivals, rate: f64, t0_s: f64, dwell: f64) -> Vec<f64> {
    let mut times = Vec::new();
    match arrivals {
        Arrivals::Poisson => {
            let exp = Exp::new(rate).expect("rate validated > 0");
            let mut t = exp.sample(rng);
            while t < dwell {
                times.push(t);
                t += exp.sample(rng);
            }
        }
        Arrivals::Periodic => {
            let period = 1.0 / rate;
            // pulses on the absolute grid k·period
            let mut t = (period - t0_s.rem_euclid(period)).rem_euclid(period);
            while t < dwell {
                times.push(t);
                t += period;
            }
        }
    }
    times
}
