use serde::{Deserialize, Serialize};

use crate::channel_sim::{CsiFrame, DEFAULT_WAVELENGTH_M};

use super::{
    acf_of_series, combine_mrc, estimate_speed_with, motion_statistic_with, AcfCurve, MotionDecision, PowerWindow,
    SensingError, SpeedConfig, SpeedEntry, SpeedTrace, Threshold, Verdict,
};

/// Window geometry for the sensing pipeline.
///
/// Detection uses the whole `window_len_s` window; speed uses a queue of
/// shorter ACFs (`acf_span_s` long, one every `hop_s`) inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub window_len_s: f64,
    pub acf_span_s: f64,
    pub hop_s: f64,
    pub max_lag_s: f64,
    pub wavelength_m: f64,
    pub threshold: Threshold,
    /// Windows receiving fewer than this fraction of their nominal samples
    /// are rejected instead of analysed.
    pub min_fill: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            window_len_s: 6.0,
            acf_span_s: 0.4,
            hop_s: 0.1,
            max_lag_s: 0.2,
            wavelength_m: DEFAULT_WAVELENGTH_M,
            threshold: Threshold::default(),
            min_fill: 0.9,
        }
    }
}

impl SensingConfig {
    pub fn validate(&self) -> Result<(), SensingError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.window_len_s) && ok(self.acf_span_s) && ok(self.hop_s) && ok(self.max_lag_s) && ok(self.wavelength_m))
        {
            return Err(SensingError::InvalidConfig("window lengths and wavelength must be finite and > 0".into()));
        }
        if self.acf_span_s > self.window_len_s {
            return Err(SensingError::InvalidConfig("acf span longer than the window".into()));
        }
        if 2.0 * self.max_lag_s > self.acf_span_s + 1e-12 {
            return Err(SensingError::InvalidConfig("max lag must not exceed half the acf span".into()));
        }
        if !(0.0..=1.0).contains(&self.min_fill) {
            return Err(SensingError::InvalidConfig("min_fill must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Everything the foundation layer derives from one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAnalysis {
    pub start_s: f64,
    pub end_s: f64,
    pub frames: usize,
    pub expected_frames: usize,
    pub decision: MotionDecision,
    pub acf_queue: Vec<AcfCurve>,
    pub ms_history: Vec<MotionDecision>,
    pub speeds: SpeedTrace,
}

impl WindowAnalysis {
    pub fn median_speed(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.speeds.speeds().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }

    pub fn record(&self, device_id: u16) -> WindowRecord {
        let best = self
            .speeds
            .entries
            .iter()
            .filter(|e| e.speed_mps.is_some())
            .map(|e| e.peak_quality)
            .fold(0.0, f64::max);
        WindowRecord {
            device_id,
            time_s: self.end_s,
            motion_statistic: self.decision.motion_statistic,
            verdict: self.decision.verdict,
            speed_mps: self.median_speed(),
            peak_quality: best,
        }
    }
}

/// One line of the per-window output stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub device_id: u16,
    pub time_s: f64,
    pub motion_statistic: f64,
    pub verdict: Verdict,
    pub speed_mps: Option<f64>,
    pub peak_quality: f64,
}

impl WindowRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }
}

/// Runs detection and speed estimation over the current window contents.
pub fn analyze_window(window: &PowerWindow, cfg: &SensingConfig) -> Result<WindowAnalysis, SensingError> {
    cfg.validate()?;
    let n = window.len();
    if n < 2 {
        return Err(SensingError::WindowTooShort { have: n, need: 2 });
    }
    let dt = window.sample_interval_s();
    let series = window.series();
    let full = combine_mrc(acf_of_series(&series, dt, dt)?);
    let decision = motion_statistic_with(&full, &cfg.threshold);

    let span = (cfg.acf_span_s / dt).round() as usize;
    let hop = ((cfg.hop_s / dt).round() as usize).max(1);
    let speed_cfg = SpeedConfig { threshold: cfg.threshold, ..SpeedConfig::default() };
    let timestamps = window.timestamps();
    let mut acf_queue = Vec::new();
    let mut ms_history = Vec::new();
    let mut entries = Vec::new();
    if span >= 2 && n >= span {
        let mut end = span;
        while end <= n {
            let slice: Vec<Vec<f64>> = series.iter().map(|s| s[end - span..end].to_vec()).collect();
            let curve = combine_mrc(acf_of_series(&slice, dt, cfg.max_lag_s)?);
            ms_history.push(motion_statistic_with(&curve, &cfg.threshold));
            let mut entry: SpeedEntry = estimate_speed_with(&curve, cfg.wavelength_m, &speed_cfg);
            entry.time_s = timestamps[end - 1];
            entries.push(entry);
            acf_queue.push(curve);
            end += hop;
        }
    }
    Ok(WindowAnalysis {
        start_s: *timestamps.front().expect("non-empty"),
        end_s: *timestamps.back().expect("non-empty"),
        frames: n,
        expected_frames: window.capacity(),
        decision,
        acf_queue,
        ms_history,
        speeds: SpeedTrace { entries, ..SpeedTrace::default() },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowOutcome {
    Analyzed { index: u64, analysis: Box<WindowAnalysis> },
    /// Too few samples arrived for the window to be trusted.
    Rejected { index: u64, frames: usize, expected: usize },
}

impl WindowOutcome {
    pub fn index(&self) -> u64 {
        match self {
            WindowOutcome::Analyzed { index, .. } | WindowOutcome::Rejected { index, .. } => *index,
        }
    }
}

/// Cuts a frame stream into back-to-back windows aligned to multiples of
/// `window_len_s` on the trace clock and analyses each as it closes. Every
/// window's result depends only on the frames inside it.
#[derive(Debug, Clone)]
pub struct WindowedSensor {
    cfg: SensingConfig,
    window: PowerWindow,
    current: Option<u64>,
    rejected_frames: usize,
}

impl WindowedSensor {
    pub fn new(cfg: SensingConfig, sample_rate_hz: f64) -> Result<Self, SensingError> {
        cfg.validate()?;
        Ok(Self { window: PowerWindow::new(cfg.window_len_s, sample_rate_hz)?, cfg, current: None, rejected_frames: 0 })
    }

    pub fn config(&self) -> &SensingConfig {
        &self.cfg
    }

    pub fn window(&self) -> &PowerWindow {
        &self.window
    }

    pub fn rejected_frames(&self) -> usize {
        self.rejected_frames
    }

    /// Feeds one frame; returns the outcome of a window it closed, if any.
    /// `on_close` sees the window contents before they are discarded.
    pub fn push_with<F>(&mut self, frame: &CsiFrame, mut on_close: F) -> Option<WindowOutcome>
    where
        F: FnMut(&PowerWindow),
    {
        let index = (frame.timestamp_s / self.cfg.window_len_s + 1e-9).floor().max(0.0) as u64;
        let mut closed = None;
        match self.current {
            Some(cur) if index > cur => {
                closed = Some(self.close(cur, &mut on_close));
                self.current = Some(index);
            }
            Some(cur) if index < cur => {
                self.rejected_frames += 1;
                return None;
            }
            None => self.current = Some(index),
            _ => {}
        }
        if self.window.update(frame).is_err() {
            self.rejected_frames += 1;
        }
        closed
    }

    pub fn push(&mut self, frame: &CsiFrame) -> Option<WindowOutcome> {
        self.push_with(frame, |_| {})
    }

    /// Closes the window in progress (end of stream).
    pub fn finish_with<F: FnMut(&PowerWindow)>(&mut self, mut on_close: F) -> Option<WindowOutcome> {
        let cur = self.current.take()?;
        Some(self.close(cur, &mut on_close))
    }

    pub fn finish(&mut self) -> Option<WindowOutcome> {
        self.finish_with(|_| {})
    }

    fn close<F: FnMut(&PowerWindow)>(&mut self, index: u64, on_close: &mut F) -> WindowOutcome {
        let expected = self.window.capacity();
        let frames = self.window.len();
        let outcome = if (frames as f64) < self.cfg.min_fill * expected as f64 || frames < 2 {
            WindowOutcome::Rejected { index, frames, expected }
        } else {
            on_close(&self.window);
            match analyze_window(&self.window, &self.cfg) {
                Ok(analysis) => WindowOutcome::Analyzed { index, analysis: Box::new(analysis) },
                Err(_) => WindowOutcome::Rejected { index, frames, expected },
            }
        };
        self.window.clear();
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_sim::{generate_trace, ChannelConfig, ImpairmentConfig, SubjectProfile};

    fn run(frames: &[CsiFrame], rate: f64) -> Vec<WindowOutcome> {
        let mut sensor = WindowedSensor::new(SensingConfig::default(), rate).unwrap();
        let mut out: Vec<WindowOutcome> = frames.iter().filter_map(|f| sensor.push(f)).collect();
        out.extend(sensor.finish());
        out
    }

    #[test]
    fn windows_tile_the_trace() {
        let cfg = ChannelConfig::new(4);
        let frames = generate_trace(&cfg, &SubjectProfile::none(), 18.0, &ImpairmentConfig::none()).unwrap();
        let out = run(&frames, cfg.sample_rate_hz);
        assert_eq!(out.len(), 3);
        for (i, o) in out.iter().enumerate() {
            match o {
                WindowOutcome::Analyzed { index, analysis } => {
                    assert_eq!(*index, i as u64);
                    assert_eq!(analysis.frames, 600);
                    assert_eq!(analysis.decision.verdict, Verdict::Static);
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn lossy_windows_are_rejected() {
        let cfg = ChannelConfig::new(4);
        let frames = generate_trace(&cfg, &SubjectProfile::none(), 12.0, &ImpairmentConfig::with_loss(0.3)).unwrap();
        assert!(run(&frames, cfg.sample_rate_hz).iter().all(|o| matches!(o, WindowOutcome::Rejected { .. })));
    }

    #[test]
    fn walking_subject_is_detected_with_speed_queue() {
        let cfg = ChannelConfig::new(9).with_sample_rate(500.0);
        let frames = generate_trace(&cfg, &SubjectProfile::human(), 6.0, &ImpairmentConfig::none()).unwrap();
        let out = run(&frames, cfg.sample_rate_hz);
        let WindowOutcome::Analyzed { analysis, .. } = &out[0] else { panic!("rejected") };
        assert!(analysis.decision.is_motion());
        // (3000 - 200) / 50 + 1 sub-windows
        assert_eq!(analysis.acf_queue.len(), 57);
        assert_eq!(analysis.ms_history.len(), 57);
        let median = analysis.median_speed().unwrap();
        assert!((0.6..2.0).contains(&median), "median speed {median}");
        let line = analysis.record(3).to_json_line();
        assert!(line.contains("\"verdict\":\"motion\""));
    }

    #[test]
    fn rejects_inconsistent_geometry() {
        let cfg = SensingConfig { max_lag_s: 0.3, ..SensingConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
