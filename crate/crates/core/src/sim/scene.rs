use std::path::Path;

use serde::{Deserialize, Serialize};

use super::device::MAX_TUNE_HZ;
use super::tone_power_dbm;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("reading scene {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing scene: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

/// Pulse arrival process for a PD pulse train.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrivals {
    #[default]
    Poisson,
    Periodic,
}

/// A single RF source. `attenuation_db` is the path loss applied to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Emitter {
    Cw {
        freq_hz: f64,
        /// Peak volts across 50 Ω.
        amplitude_v: f64,
        #[serde(default)]
        phase_rad: f64,
        #[serde(default)]
        attenuation_db: f64,
    },
    /// Damped-sinusoid discharge pulses `V·e^(−t/τ)·sin(2π f_c t)`.
    PdPulseTrain {
        center_freq_hz: f64,
        /// −3 dB bandwidth; sets `τ = 1/(π·B)`.
        bandwidth_hz: f64,
        repetition_hz: f64,
        #[serde(default)]
        arrivals: Arrivals,
        pulse_peak_v: f64,
        #[serde(default)]
        attenuation_db: f64,
    },
    /// On/off keyed carrier, e.g. a Bluetooth link.
    Burst {
        center_freq_hz: f64,
        duty_cycle: f64,
        burst_len_s: f64,
        power_dbm: f64,
        #[serde(default)]
        attenuation_db: f64,
    },
}

/// Pulse-train spectral support, in multiples of its bandwidth either side.
const PULSE_SUPPORT_BANDWIDTHS: f64 = 50.0;

impl Emitter {
    pub fn attenuation_db(&self) -> f64 {
        match self {
            Emitter::Cw { attenuation_db, .. }
            | Emitter::PdPulseTrain { attenuation_db, .. }
            | Emitter::Burst { attenuation_db, .. } => *attenuation_db,
        }
    }

    pub fn nominal_freq(&self) -> f64 {
        match self {
            Emitter::Cw { freq_hz, .. } => *freq_hz,
            Emitter::PdPulseTrain { center_freq_hz, .. } | Emitter::Burst { center_freq_hz, .. } => *center_freq_hz,
        }
    }

    /// Linear amplitude factor from path loss.
    pub fn path_gain(&self) -> f64 {
        10f64.powf(-self.attenuation_db() / 20.0)
    }

    /// Frequency interval outside which the emitter contributes nothing.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Emitter::Cw { freq_hz, .. } => (*freq_hz, *freq_hz),
            Emitter::Burst { center_freq_hz, duty_cycle, burst_len_s, .. } => {
                if *duty_cycle >= 1.0 {
                    (*center_freq_hz, *center_freq_hz)
                } else {
                    // gating sidebands; the brick-wall filter clips whatever spills further
                    let w = 200.0 / burst_len_s;
                    (center_freq_hz - w, center_freq_hz + w)
                }
            }
            Emitter::PdPulseTrain { center_freq_hz, bandwidth_hz, .. } => {
                let w = PULSE_SUPPORT_BANDWIDTHS * bandwidth_hz;
                (center_freq_hz - w, center_freq_hz + w)
            }
        }
    }

    /// Analytic average received power in dBm, after path loss.
    pub fn received_power_dbm(&self) -> f64 {
        let att = self.attenuation_db();
        match self {
            Emitter::Cw { amplitude_v, .. } => tone_power_dbm(*amplitude_v) - att,
            Emitter::Burst { power_dbm, .. } => power_dbm - att,
            Emitter::PdPulseTrain { bandwidth_hz, repetition_hz, pulse_peak_v, .. } => {
                // energy per pulse ∫V²e^(−2t/τ)dt = V²τ/2 (V²s) into 2·50 Ω
                let tau = 1.0 / (std::f64::consts::PI * bandwidth_hz);
                let watts = repetition_hz * pulse_peak_v * pulse_peak_v * tau / 2.0 / 100.0;
                10.0 * (watts / 1e-3).log10() - att
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        let f = self.nominal_freq();
        if !(f > 0.0 && f <= MAX_TUNE_HZ) {
            return Err(format!("emitter frequency {f} Hz outside (0, {MAX_TUNE_HZ}]"));
        }
        let att = self.attenuation_db();
        if !(att >= 0.0 && att.is_finite()) {
            return Err(format!("attenuation must be finite and >= 0, got {att}"));
        }
        match self {
            Emitter::Cw { amplitude_v, phase_rad, .. } => {
                if !(*amplitude_v > 0.0 && amplitude_v.is_finite()) {
                    return Err(format!("tone amplitude must be > 0, got {amplitude_v}"));
                }
                if !phase_rad.is_finite() {
                    return Err("tone phase must be finite".into());
                }
            }
            Emitter::PdPulseTrain { bandwidth_hz, repetition_hz, pulse_peak_v, .. } => {
                if !(*bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
                    return Err(format!("pulse bandwidth must be > 0, got {bandwidth_hz}"));
                }
                if !(*repetition_hz > 0.0 && repetition_hz.is_finite()) {
                    return Err(format!("pulse repetition must be > 0, got {repetition_hz}"));
                }
                if !(*pulse_peak_v > 0.0 && pulse_peak_v.is_finite()) {
                    return Err(format!("pulse peak must be > 0, got {pulse_peak_v}"));
                }
            }
            Emitter::Burst { duty_cycle, burst_len_s, power_dbm, .. } => {
                if !(*duty_cycle > 0.0 && *duty_cycle <= 1.0) {
                    return Err(format!("duty cycle must be in (0, 1], got {duty_cycle}"));
                }
                if !(*burst_len_s > 0.0 && burst_len_s.is_finite()) {
                    return Err(format!("burst length must be > 0, got {burst_len_s}"));
                }
                if !power_dbm.is_finite() {
                    return Err("burst power must be finite".into());
                }
            }
        }
        Ok(())
    }
}

/// Declarative description of the RF environment.
///
/// ```toml
/// seed = 7
/// noise_density_dbm_hz = -164.0
///
/// [[emitters]]
/// kind = "cw"
/// freq_hz = 315e6
/// amplitude_v = 0.5
/// attenuation_db = 40.0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterScene {
    #[serde(default)]
    pub emitters: Vec<Emitter>,
    /// Receiver noise density; `-inf` switches noise off.
    pub noise_density_dbm_hz: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EmitterScene {
    /// Thermal floor plus a 10 dB noise figure.
    pub const DEFAULT_NOISE_DENSITY: f64 = -164.0;

    pub fn new(emitters: Vec<Emitter>, noise_density_dbm_hz: f64, seed: u64) -> Result<Self, SceneError> {
        let scene = Self { emitters, noise_density_dbm_hz, seed };
        scene.validate()?;
        Ok(scene)
    }

    pub fn noiseless(emitters: Vec<Emitter>) -> Result<Self, SceneError> {
        Self::new(emitters, f64::NEG_INFINITY, 0)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.noise_density_dbm_hz.is_nan() || self.noise_density_dbm_hz == f64::INFINITY {
            return Err(SceneError::Invalid("noise density must be finite or -inf".into()));
        }
        for (i, e) in self.emitters.iter().enumerate() {
            e.validate().map_err(|m| SceneError::Invalid(format!("emitter {i}: {m}")))?;
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SceneError> {
        let scene: EmitterScene = toml::from_str(s)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    /// Linear noise density in W/Hz, zero when noise is off.
    pub fn noise_density_w_hz(&self) -> f64 {
        if self.noise_density_dbm_hz == f64::NEG_INFINITY {
            0.0
        } else {
            1e-3 * 10f64.powf(self.noise_density_dbm_hz / 10.0)
        }
    }
}

/// Narrowband match window for tones and bursts.
const NARROWBAND_MATCH_HZ: f64 = 1e3;

/// Analytic received power of the strongest emitter present at `freq`, or
/// `-inf` when nothing radiates there.
///
/// Tones and bursts match within 1 kHz of their carrier; pulse trains match
/// inside their −3 dB band.
pub fn scene_power_at(scene: &EmitterScene, freq: f64) -> f64 {
    scene
        .emitters
        .iter()
        .filter(|e| {
            let half = match e {
                Emitter::PdPulseTrain { bandwidth_hz, .. } => bandwidth_hz / 2.0,
                _ => NARROWBAND_MATCH_HZ,
            };
            (e.nominal_freq() - freq).abs() <= half
        })
        .map(Emitter::received_power_dbm)
        .fold(f64::NEG_INFINITY, f64::max)
}
