use chrono::{DateTime, Utc};
use uuid::Uuid;

use super::{SweepError, SweepPlan};
use crate::codec::SpectrumRows;
use crate::dsp::PowerSpectrum;
use crate::scalar::Real;

/// Full-band spectrum assembled from per-window slices.
///
/// Each segment holds only the bins its window owns, so concatenating the
/// segments in order gives one ascending frequency axis without duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct StitchedSpectrum<T = f64> {
    pub sweep_id: Uuid,
    pub t_start: DateTime<Utc>,
    pub t_end: DateTime<Utc>,
    pub segments: Vec<PowerSpectrum<T>>,
    /// Planned window indices that produced no slice.
    pub gaps: Vec<usize>,
    /// False when the sweep was interrupted before its last window.
    pub complete: bool,
}

impl<T: Real> StitchedSpectrum<T> {
    pub fn len(&self) -> usize {
        self.segments.iter().map(PowerSpectrum::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin_freqs(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().flat_map(|s| s.bin_freqs.iter().copied())
    }

    pub fn power_dbm(&self) -> impl Iterator<Item = T> + '_ {
        self.segments.iter().flat_map(|s| s.power_dbm.iter().copied())
    }

    /// Window that supplied each output bin, in axis order.
    pub fn bin_sources(&self) -> impl Iterator<Item = usize> + '_ {
        self.segments.iter().flat_map(|s| std::iter::repeat_n(s.window_index, s.len()))
    }
}

impl<T: Real> SpectrumRows for StitchedSpectrum<T> {
    fn spectrum_rows(&self) -> Vec<(f64, f64)> {
        self.bin_freqs().zip(self.power_dbm().map(Real::as_f64)).collect()
    }
}

/// Window index owning `freq`: among windows whose half-open span contains
/// it, the one with the nearest center, lower index on ties.
pub(crate) fn owner(plan: &SweepPlan, freq: f64, eps: f64) -> Option<usize> {
    let count = plan.window_count();
    let half = plan.span / 2.0;
    let rel = freq - plan.f_start;
    let lo = (((rel - half) / plan.step).floor() - 1.0).max(0.0) as usize;
    let hi = (((rel + half) / plan.step).ceil() + 1.0).min(count as f64 - 1.0).max(0.0) as usize;
    let mut best: Option<(usize, f64)> = None;
    for i in lo..=hi.min(count - 1) {
        let c = plan.center(i);
        if !(freq >= c - half - eps && freq < c + half - eps) {
            continue;
        }
        let d = (freq - c).abs();
        match best {
            Some((_, bd)) if d >= bd - eps => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
}

/// Combine one slice per successful window into a single spectrum.
///
/// With `span == step` slices abut edge to edge; with overlap every
/// frequency is taken from the nearest-center window. The returned spectrum
/// carries a nil sweep id and epoch timestamps for the caller to fill in.
pub fn stitch<T: Real>(slices: &[PowerSpectrum<T>], plan: &SweepPlan) -> Result<StitchedSpectrum<T>, SweepError> {
    if slices.is_empty() {
        return Err(SweepError::EmptySweep);
    }
    plan.validate()?;
    let count = plan.window_count();
    let mut ordered: Vec<&PowerSpectrum<T>> = slices.iter().collect();
    ordered.sort_by_key(|s| s.window_index);
    let mut segments = Vec::with_capacity(ordered.len());
    for s in ordered {
        if s.window_index >= count {
            return Err(SweepError::Config(format!("slice for window {} outside plan of {count}", s.window_index)));
        }
        let eps = s.bin_width() * 1e-6;
        let mut seg = PowerSpectrum { span: plan.span, ..s.clone() }.trimmed_to_span();
        let keep: Vec<bool> = seg.bin_freqs.iter().map(|&f| owner(plan, f, eps) == Some(s.window_index)).collect();
        let mut it = keep.iter();
        seg.bin_freqs.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        seg.power_dbm.retain(|_| *it.next().unwrap());
        segments.push(seg);
    }
    let present: std::collections::BTreeSet<usize> = segments.iter().map(|s| s.window_index).collect();
    let epoch = DateTime::<Utc>::UNIX_EPOCH;
    Ok(StitchedSpectrum {
        sweep_id: Uuid::nil(),
        t_start: epoch,
        t_end: epoch,
        gaps: (0..count).filter(|i| !present.contains(i)).collect(),
        segments,
        complete: true,
    })
}
