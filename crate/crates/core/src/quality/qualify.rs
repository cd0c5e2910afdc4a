use serde::{Deserialize, Serialize};

use crate::channel_sim::CsiFrame;
use crate::foundation::{analyze_window, PowerWindow, SensingConfig, WindowAnalysis};
use crate::subject_id::{classify, features_of, ClassifierModel};

use super::{amplitude_score, timestamp_score, QualityError};

/// A device qualifies when its final score is strictly above this.
pub const QUALIFY_ABOVE: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    pub timestamp: f64,
    pub amplitude: f64,
    pub motion: f64,
    pub human: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        Self { timestamp: 0.2, amplitude: 0.2, motion: 0.3, human: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub sample_rate_hz: f64,
    /// Nominal length of each calibration trace; +/- 10% is accepted.
    pub trace_len_s: f64,
    /// Fraction of a window shared with the next one.
    pub overlap: f64,
    pub weights: QualityWeights,
    pub sensing: SensingConfig,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 500.0,
            trace_len_s: 30.0,
            overlap: 0.5,
            weights: QualityWeights::default(),
            sensing: SensingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub timestamp_score: f64,
    pub amplitude_score: f64,
    pub motion_score: f64,
    /// `None` when no classifier model was supplied.
    pub human_score: Option<f64>,
    pub final_score: f64,
    pub packet_loss_rate: f64,
    pub qualified: bool,
    /// Set when the human score was left out and the rest reweighted.
    pub human_score_omitted: bool,
    pub walk_windows: usize,
    pub static_windows: usize,
}

impl QualityReport {
    /// Weighted blend of the sub-scores. Without a human score the other
    /// three weights are renormalised to sum to one.
    pub fn from_scores(
        timestamp_score: f64,
        amplitude_score: f64,
        motion_score: f64,
        human_score: Option<f64>,
        weights: &QualityWeights,
    ) -> Self {
        let mut num = weights.timestamp * timestamp_score + weights.amplitude * amplitude_score + weights.motion * motion_score;
        let mut den = weights.timestamp + weights.amplitude + weights.motion;
        if let Some(h) = human_score {
            num += weights.human * h;
            den += weights.human;
        }
        let final_score = if den > 0.0 { (num / den).clamp(0.0, 100.0) } else { 0.0 };
        Self {
            timestamp_score,
            amplitude_score,
            motion_score,
            human_score,
            final_score,
            packet_loss_rate: 0.0,
            qualified: final_score > QUALIFY_ABOVE,
            human_score_omitted: human_score.is_none(),
            walk_windows: 0,
            static_windows: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Scores a device from a walk trace and a static trace. Each trace is cut
/// into overlapping windows; a window with too few frames counts as a miss.
pub fn qualification_test(
    walk: &[CsiFrame],
    still: &[CsiFrame],
    model: Option<&ClassifierModel>,
    cfg: &QualityConfig,
) -> Result<QualityReport, QualityError> {
    if !(cfg.sample_rate_hz.is_finite() && cfg.sample_rate_hz > 0.0) || !(0.0..1.0).contains(&cfg.overlap) {
        return Err(QualityError::InvalidConfig("sample rate must be > 0 and overlap in [0, 1)".into()));
    }
    cfg.sensing.validate()?;
    check_duration("walk", walk, cfg)?;
    check_duration("static", still, cfg)?;

    let walk_ts = timestamp_score(walk)?;
    let still_ts = timestamp_score(still)?;
    let walk_amp = amplitude_score(walk)?;
    let still_amp = amplitude_score(still)?;

    let walk_windows = analyse_windows(walk, cfg)?;
    let still_windows = analyse_windows(still, cfg)?;
    let fraction = |hits: usize, total: usize| if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    let walk_motion = walk_windows.iter().flatten().filter(|a| a.decision.is_motion()).count();
    let still_static = still_windows.iter().flatten().filter(|a| !a.decision.is_motion()).count();
    let motion_score =
        100.0 * fraction(walk_motion, walk_windows.len()) * fraction(still_static, still_windows.len());

    let human_score = match model {
        Some(model) => {
            let mut humans = 0;
            for a in walk_windows.iter().flatten() {
                if classify(model, &features_of(a))?.0.is_human() {
                    humans += 1;
                }
            }
            Some(100.0 * fraction(humans, walk_windows.len()))
        }
        None => None,
    };

    let mut report = QualityReport::from_scores(
        0.5 * (walk_ts.score + still_ts.score),
        0.5 * (walk_amp.score + still_amp.score),
        motion_score,
        human_score,
        &cfg.weights,
    );
    report.packet_loss_rate = 0.5 * (walk_ts.loss_rate + still_ts.loss_rate);
    report.walk_windows = walk_windows.len();
    report.static_windows = still_windows.len();
    Ok(report)
}

fn check_duration(which: &'static str, frames: &[CsiFrame], cfg: &QualityConfig) -> Result<(), QualityError> {
    let got_s = match (frames.first(), frames.last()) {
        (Some(a), Some(b)) => b.timestamp_s - a.timestamp_s + 1.0 / cfg.sample_rate_hz,
        _ => 0.0,
    };
    if (got_s - cfg.trace_len_s).abs() > 0.1 * cfg.trace_len_s {
        return Err(QualityError::BadDuration { which, got_s, expected_s: cfg.trace_len_s });
    }
    Ok(())
}

/// One entry per window; `None` marks a window that could not be analysed.
fn analyse_windows(frames: &[CsiFrame], cfg: &QualityConfig) -> Result<Vec<Option<WindowAnalysis>>, QualityError> {
    let len = cfg.sensing.window_len_s;
    let hop = len * (1.0 - cfg.overlap);
    let t0 = frames[0].timestamp_s;
    let span = frames[frames.len() - 1].timestamp_s - t0 + 1.0 / cfg.sample_rate_hz;
    let count = if span + 1e-9 >= len { ((span - len) / hop + 1e-9).floor() as usize + 1 } else { 0 };
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = t0 + k as f64 * hop;
        let lo = frames.partition_point(|f| f.timestamp_s < start - 1e-9);
        let hi = frames.partition_point(|f| f.timestamp_s < start + len - 1e-9);
        let mut window = PowerWindow::new(len, cfg.sample_rate_hz)?;
        for f in &frames[lo..hi] {
            let _ = window.update(f);
        }
        let usable = window.len() >= 2 && window.len() as f64 >= cfg.sensing.min_fill * window.capacity() as f64;
        out.push(if usable { analyze_window(&window, &cfg.sensing).ok() } else { None });
    }
    Ok(out)
}
