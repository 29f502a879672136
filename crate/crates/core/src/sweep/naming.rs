use serde::{Deserialize, Serialize};

/// Artifact locations relative to the data directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRefs {
    pub iq_path: String,
    pub spectrum_path: String,
}

/// `pd_<YYYYMMDDThhmmss.mmmZ>_<kHz>kHz`, frequency rounded to the nearest kHz.
pub fn artifact_stem(t0: chrono::DateTime<chrono::Utc>, peak_freq: f64) -> String {
    let khz = (peak_freq / 1e3).round() as u64;
    format!("pd_{}_{khz}kHz", t0.format("%Y%m%dT%H%M%S%.3fZ"))
}

/// File names for an event's IQ frame and window spectrum under `events/`.
pub fn name_artifacts(t0: chrono::DateTime<chrono::Utc>, peak_freq: f64) -> ArtifactRefs {
    let stem = artifact_stem(t0, peak_freq);
    ArtifactRefs { iq_path: format!("events/{stem}.iqf"), spectrum_path: format!("events/{stem}_spectrum.csv") }
}
