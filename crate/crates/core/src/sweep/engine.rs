use std::time::{Duration, Instant};

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::naming::{name_artifacts, ArtifactRefs};
use super::{plan_windows, stitch, Clock, StitchedSpectrum, SweepError, SweepPlan};
use crate::codec::{EventIndexRecord, UploadState};
use crate::dsp::{classify, peak_search, Classification, Peak, PowerSpectrum, SpectrumAnalyzer};
use crate::frame::{truncate_ms, IqFrame};
use crate::scalar::Real;
use crate::sim::FrontEnd;

/// A threshold crossing in one window of one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdEvent {
    pub event_id: Uuid,
    pub t0: DateTime<Utc>,
    pub peak_freq: f64,
    pub peak_power_dbm: f64,
    pub window_index: usize,
    pub sweep_id: Uuid,
    pub threshold_dbm: f64,
    pub artifacts: ArtifactRefs,
}

impl PdEvent {
    pub fn index_record(&self) -> EventIndexRecord {
        EventIndexRecord {
            event_id: self.event_id,
            t0: self.t0,
            peak_freq_hz: self.peak_freq,
            peak_power_dbm: self.peak_power_dbm,
            threshold_dbm: self.threshold_dbm,
            sweep_id: self.sweep_id,
            iq_path: self.artifacts.iq_path.clone(),
            spectrum_path: self.artifacts.spectrum_path.clone(),
            upload_state: UploadState::Pending,
        }
    }
}

/// Per-window outcome, one per planned window visited.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowReport {
    pub window_index: usize,
    pub center_freq: f64,
    pub span: f64,
    pub peak: Option<Peak<f64>>,
    pub class: Classification,
    /// Samples acquired by this engine so far, this window included.
    pub cumulative: u64,
    /// Samples in this window's frame.
    pub current: u64,
    pub error: Option<String>,
}

/// Console line for a window:
/// `cumulative: N, current: M >>> cf MHz= … , span MHz= … , [ max MHz= … , max dBm= … ] ...noise`.
pub fn format_window_line(r: &WindowReport) -> String {
    let head = format!(
        "cumulative: {}, current: {} >>> cf MHz= {:.3} , span MHz= {:.3} , ",
        r.cumulative,
        r.current,
        r.center_freq / 1e6,
        r.span / 1e6
    );
    match (&r.error, &r.peak) {
        (Some(e), _) => format!("{head}[ failed: {e} ] ...gap"),
        (None, Some(p)) => {
            let tag = match r.class {
                Classification::Threshold => "THRESHOLD",
                Classification::Noise => "noise",
            };
            format!("{head}[ max MHz= {:.3} , max dBm= {:.3} ] ...{tag}", p.freq / 1e6, p.power_dbm)
        }
        (None, None) => format!("{head}[ empty ] ...noise"),
    }
}

/// An event-bearing frame kept for persistence.
#[derive(Clone, Debug)]
pub struct RetainedFrame<T = f64> {
    pub frame: IqFrame,
    /// Window spectrum trimmed to the span.
    pub spectrum: PowerSpectrum<T>,
    pub event: PdEvent,
}

#[derive(Clone, Debug)]
pub struct SweepResult<T = f64> {
    pub sweep_id: Uuid,
    pub plan: SweepPlan,
    pub events: Vec<PdEvent>,
    /// `None` only when no window produced a spectrum.
    pub stitched: Option<StitchedSpectrum<T>>,
    pub retained: Vec<RetainedFrame<T>>,
    pub windows: Vec<WindowReport>,
    /// Measured wall time for the sweep, overhead included.
    pub duration: Duration,
    pub complete: bool,
}

impl<T> SweepResult<T> {
    pub fn frames_retained(&self) -> usize {
        self.retained.len()
    }
}

/// Callbacks from inside a sweep.
pub trait SweepHooks {
    fn on_window(&mut self, _report: &WindowReport) {}

    /// Polled before each window; true interrupts the sweep.
    fn should_stop(&self) -> bool {
        false
    }
}

impl SweepHooks for () {}

/// Drives tune → acquire → spectrum → peak → classify across a plan.
pub struct SweepEngine<T: Real = f64> {
    analyzer: Option<SpectrumAnalyzer<T>>,
    cumulative: u64,
    last_t0: Option<DateTime<Utc>>,
}

impl<T: Real> Default for SweepEngine<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> SweepEngine<T> {
    pub fn new() -> Self {
        Self { analyzer: None, cumulative: 0, last_t0: None }
    }

    pub fn samples_acquired(&self) -> u64 {
        self.cumulative
    }

    fn analyzer(&mut self, plan: &SweepPlan) -> Result<&mut SpectrumAnalyzer<T>, SweepError> {
        let stale = self.analyzer.as_ref().is_none_or(|a| a.n_fft() != plan.n_fft || a.window() != plan.window_fn);
        if stale {
            self.analyzer = Some(SpectrumAnalyzer::new(plan.n_fft, plan.window_fn)?);
        }
        Ok(self.analyzer.as_mut().expect("just set"))
    }

    /// Strictly increasing millisecond timestamps across the engine's life.
    fn next_t0(&mut self, now: DateTime<Utc>) -> DateTime<Utc> {
        let mut t = truncate_ms(now);
        if let Some(last) = self.last_t0 {
            if t <= last {
                t = last + TimeDelta::milliseconds(1);
            }
        }
        self.last_t0 = Some(t);
        t
    }

    /// One pass over every planned window.
    ///
    /// A window whose tune, acquisition or analysis fails is reported and
    /// left as a stitch gap; the sweep carries on.
    pub fn run_sweep<D, C>(
        &mut self,
        plan: &SweepPlan,
        device: &mut D,
        clock: &mut C,
        hooks: &mut dyn SweepHooks,
    ) -> Result<SweepResult<T>, SweepError>
    where
        D: FrontEnd + ?Sized,
        C: Clock + ?Sized,
    {
        let windows = plan_windows(plan)?;
        device.set_span(plan.span)?;
        self.analyzer(plan)?;
        let sweep_id = Uuid::new_v4();
        let started = Instant::now();
        let t_start = truncate_ms(clock.now());
        let threshold = T::of(plan.threshold_dbm);

        let mut slices = Vec::with_capacity(windows.len());
        let mut events = Vec::new();
        let mut retained = Vec::new();
        let mut reports = Vec::with_capacity(windows.len());
        let mut complete = true;

        for w in &windows {
            if hooks.should_stop() {
                complete = false;
                break;
            }
            let t0 = self.next_t0(clock.now());
            let acquired =
                device.tune(w.center_freq).and_then(|_| device.acquire(plan.dwell, t0)).map_err(|e| e.to_string());
            clock.pace(t0, plan.dwell);
            let outcome = acquired.and_then(|mut frame| {
                frame.window_index = w.index;
                frame.t0 = t0;
                let spectrum =
                    self.analyzer.as_mut().expect("prepared above").analyze_frame(&frame).map_err(|e| e.to_string())?;
                Ok((frame, spectrum))
            });
            let (frame, spectrum) = match outcome {
                Ok(v) => v,
                Err(e) => {
                    tracing::warn!(window = w.index, center = w.center_freq, "window failed: {e}");
                    let report = WindowReport {
                        window_index: w.index,
                        center_freq: w.center_freq,
                        span: plan.span,
                        peak: None,
                        class: Classification::Noise,
                        cumulative: self.cumulative,
                        current: 0,
                        error: Some(e),
                    };
                    hooks.on_window(&report);
                    reports.push(report);
                    continue;
                }
            };
            let current = frame.len() as u64;
            self.cumulative += current;
            let trimmed = spectrum.trimmed_to_span();
            let peak = peak_search(&trimmed);
            let class = peak.map_or(Classification::Noise, |p| classify(p.power_dbm, threshold));
            let peak64 = peak.map(|p| Peak { freq: p.freq, power_dbm: p.power_dbm.as_f64() });
            let report = WindowReport {
                window_index: w.index,
                center_freq: w.center_freq,
                span: plan.span,
                peak: peak64,
                class,
                cumulative: self.cumulative,
                current,
                error: None,
            };
            hooks.on_window(&report);
            reports.push(report);

            if let (Classification::Threshold, Some(p)) = (class, peak64) {
                let event = PdEvent {
                    event_id: Uuid::new_v4(),
                    t0,
                    peak_freq: p.freq,
                    peak_power_dbm: p.power_dbm,
                    window_index: w.index,
                    sweep_id,
                    threshold_dbm: plan.threshold_dbm,
                    artifacts: name_artifacts(t0, p.freq),
                };
                events.push(event.clone());
                retained.push(RetainedFrame { frame, spectrum: trimmed, event });
            }
            slices.push(spectrum);
        }

        let t_end = truncate_ms(clock.now());
        let stitched = match stitch(&slices, plan) {
            Ok(mut s) => {
                s.sweep_id = sweep_id;
                s.t_start = t_start;
                s.t_end = t_end;
                s.complete = complete;
                if !complete {
                    // unvisited windows are not failures
                    let visited = reports.len();
                    s.gaps.retain(|&g| g < visited);
                }
                Some(s)
            }
            Err(SweepError::EmptySweep) => None,
            Err(e) => return Err(e),
        };
        Ok(SweepResult {
            sweep_id,
            plan: plan.clone(),
            events,
            stitched,
            retained,
            windows: reports,
            duration: started.elapsed(),
            complete,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DeviceError, Emitter, EmitterScene, FrontEndConfig, SimDevice};
    use crate::sweep::SimClock;

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2024-05-01T12:00:00Z").unwrap().with_timezone(&Utc)
    }

    fn desk_plan() -> SweepPlan {
        SweepPlan {
            f_start: 307e6,
            f_stop: 323e6,
            step: 4e6,
            span: 4e6,
            dwell: 0.002,
            n_fft: 2048,
            ..Default::default()
        }
    }

    fn device(emitters: Vec<Emitter>, noise: f64) -> SimDevice {
        let scene = EmitterScene::new(emitters, noise, 5).unwrap();
        SimDevice::new(scene, FrontEndConfig { iq_rate: 4e6, span: 4e6, ..Default::default() }).unwrap()
    }

    fn tone(freq: f64, dbm: f64) -> Emitter {
        let amp = 0.5;
        Emitter::Cw {
            freq_hz: freq,
            amplitude_v: amp,
            phase_rad: 0.0,
            attenuation_db: crate::sim::tone_power_dbm(amp) - dbm,
        }
    }

    #[test]
    fn single_tone_yields_one_event_and_retained_frame() {
        let mut dev = device(vec![tone(315e6, -36.0)], -164.0);
        let mut clock = SimClock::starting_at(t0());
        let mut engine = SweepEngine::<f64>::new();
        let r = engine.run_sweep(&desk_plan(), &mut dev, &mut clock, &mut ()).unwrap();
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.frames_retained(), 1);
        let e = &r.events[0];
        assert_eq!(e.window_index, 2);
        assert!((e.peak_freq - 315e6).abs() <= 4e6 / 2048.0);
        assert!((e.peak_power_dbm - -36.0).abs() < 1.5);
        assert_eq!(r.retained[0].frame.window_index, 2);
        let st = r.stitched.unwrap();
        assert_eq!(st.len(), 5 * 2048);
        assert!(r.complete);
        // monotone, distinct t0 across windows
        assert_eq!(r.windows.len(), 5);
        assert_eq!(r.windows.last().unwrap().cumulative, 5 * 8000);
    }

    #[test]
    fn empty_scene_prunes_everything() {
        let mut dev = device(vec![], -164.0);
        let mut clock = SimClock::starting_at(t0());
        let r = SweepEngine::<f32>::new().run_sweep(&desk_plan(), &mut dev, &mut clock, &mut ()).unwrap();
        assert!(r.events.is_empty());
        assert_eq!(r.frames_retained(), 0);
        assert_eq!(r.stitched.unwrap().segments.len(), 5);
    }

    #[test]
    fn window_lines_mirror_console_format() {
        let r = WindowReport {
            window_index: 1,
            center_freq: 760e6,
            span: 20e6,
            peak: Some(Peak { freq: 767.996e6, power_dbm: -35.704 }),
            class: Classification::Threshold,
            cumulative: 73926,
            current: 999,
            error: None,
        };
        assert_eq!(
            format_window_line(&r),
            "cumulative: 73926, current: 999 >>> cf MHz= 760.000 , span MHz= 20.000 , [ max MHz= 767.996 , max dBm= -35.704 ] ...THRESHOLD"
        );
        let n = WindowReport {
            class: Classification::Noise,
            peak: Some(Peak { freq: 730.842e6, power_dbm: -83.052 }),
            ..r
        };
        assert!(format_window_line(&n).ends_with("[ max MHz= 730.842 , max dBm= -83.052 ] ...noise"));
    }

    /// Fails acquisition for one chosen window.
    struct Flaky {
        inner: SimDevice,
        fail_center: f64,
    }

    impl FrontEnd for Flaky {
        fn tune(&mut self, f: f64) -> Result<(), DeviceError> {
            self.inner.tune(f)
        }
        fn acquire(&mut self, dwell: f64, t0: DateTime<Utc>) -> Result<IqFrame, DeviceError> {
            if self.inner.center_freq() == Some(self.fail_center) {
                return Err(DeviceError::State("injected".into()));
            }
            self.inner.acquire(dwell, t0)
        }
        fn config(&self) -> &FrontEndConfig {
            self.inner.config()
        }
        fn set_span(&mut self, span: f64) -> Result<(), DeviceError> {
            self.inner.set_span(span)
        }
    }

    #[test]
    fn failed_window_becomes_gap() {
        let mut dev = Flaky { inner: device(vec![tone(315e6, -36.0)], -164.0), fail_center: 311e6 };
        let mut clock = SimClock::starting_at(t0());
        let r = SweepEngine::<f64>::new().run_sweep(&desk_plan(), &mut dev, &mut clock, &mut ()).unwrap();
        assert_eq!(r.events.len(), 1);
        assert!(r.windows[1].error.is_some());
        assert!(format_window_line(&r.windows[1]).ends_with("...gap"));
        assert_eq!(r.stitched.unwrap().gaps, vec![1]);
    }

    struct StopAfter(usize, usize);
    impl SweepHooks for StopAfter {
        fn on_window(&mut self, _r: &WindowReport) {
            self.1 += 1;
        }
        fn should_stop(&self) -> bool {
            self.1 >= self.0
        }
    }

    #[test]
    fn stop_mid_sweep_yields_partial_stitch() {
        let mut dev = device(vec![], f64::NEG_INFINITY);
        let mut clock = SimClock::starting_at(t0());
        let mut hooks = StopAfter(2, 0);
        let r = SweepEngine::<f64>::new().run_sweep(&desk_plan(), &mut dev, &mut clock, &mut hooks).unwrap();
        assert!(!r.complete);
        let st = r.stitched.unwrap();
        assert!(!st.complete);
        assert_eq!(st.segments.len(), 2);
        assert!(st.gaps.is_empty());
    }

    #[test]
    fn span_wider_than_device_rate_is_rejected() {
        let mut dev = device(vec![], f64::NEG_INFINITY);
        let plan = SweepPlan { span: 8e6, ..desk_plan() };
        let mut clock = SimClock::starting_at(t0());
        assert!(SweepEngine::<f64>::new().run_sweep(&plan, &mut dev, &mut clock, &mut ()).is_err());
    }
}
