use serde::{Deserialize, Serialize};

use crate::channel_sim::CsiFrame;
use crate::foundation::DEGENERATE_EPS;

use super::QualityError;

pub const MIN_FRAMES: usize = 100;
/// Loss rate at which the timestamp score reaches 0.
pub const LOSS_MAX: f64 = 0.10;
/// Inter-arrival coefficient of variation at which the timestamp score reaches 0.
pub const JITTER_MAX: f64 = 1.0;
/// Bad-sample fraction at which the amplitude score reaches 0.
pub const BAD_SAMPLE_MAX: f64 = 0.4;
/// |excess kurtosis| at which the amplitude score reaches 0.
pub const KURTOSIS_SCALE: f64 = 6.0;
/// Share of samples sitting at the trace maximum above which they are
/// treated as clipped.
pub const CLIP_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimestampScore {
    pub score: f64,
    pub loss_rate: f64,
    pub jitter: f64,
}

/// `100 (1 - loss/0.1)+ (1 - jitter/1)+`.
pub fn timestamp_formula(loss_rate: f64, jitter: f64) -> f64 {
    100.0 * (1.0 - loss_rate / LOSS_MAX).max(0.0) * (1.0 - jitter / JITTER_MAX).max(0.0)
}

/// Loss from sequence gaps; jitter is the coefficient of variation of the
/// per-packet inter-arrival time (an interval spanning a gap of `k` packets
/// is divided by `k`).
pub fn timestamp_score(frames: &[CsiFrame]) -> Result<TimestampScore, QualityError> {
    if frames.len() < MIN_FRAMES {
        return Err(QualityError::TooFewFrames { have: frames.len(), need: MIN_FRAMES });
    }
    let first = frames[0].sequence as u64;
    let last = frames[frames.len() - 1].sequence as u64;
    let span = last.saturating_sub(first) + 1;
    let loss_rate = (1.0 - frames.len() as f64 / span as f64).clamp(0.0, 1.0);

    let intervals: Vec<f64> = frames
        .windows(2)
        .filter_map(|w| {
            let steps = w[1].sequence.checked_sub(w[0].sequence).filter(|&s| s > 0)?;
            Some((w[1].timestamp_s - w[0].timestamp_s) / steps as f64)
        })
        .collect();
    let n = intervals.len() as f64;
    let mean = intervals.iter().sum::<f64>() / n;
    let sd = (intervals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let jitter = if mean > 0.0 { sd / mean } else { f64::INFINITY };
    // float noise in nominal timestamps is not jitter
    let jitter = if jitter < 1e-9 { 0.0 } else { jitter };
    Ok(TimestampScore { score: timestamp_formula(loss_rate, jitter), loss_rate, jitter })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeScore {
    pub score: f64,
    /// Non-finite, zero or clipped samples over all samples.
    pub bad_fraction: f64,
    pub degenerate_fraction: f64,
    /// Mean excess kurtosis of per-subcarrier power.
    pub excess_kurtosis: f64,
}

/// `100 (1 - bad/0.4)+ (1 - degenerate share) (1 - |kurtosis|/6)+`.
pub fn amplitude_score(frames: &[CsiFrame]) -> Result<AmplitudeScore, QualityError> {
    if frames.len() < MIN_FRAMES {
        return Err(QualityError::TooFewFrames { have: frames.len(), need: MIN_FRAMES });
    }
    let f = frames.iter().map(CsiFrame::subcarrier_count).max().unwrap_or(0);
    if f == 0 {
        return Ok(AmplitudeScore { score: 0.0, bad_fraction: 1.0, degenerate_fraction: 1.0, excess_kurtosis: 0.0 });
    }
    let amps: Vec<Vec<f64>> =
        (0..f).map(|i| frames.iter().map(|fr| fr.gains.get(i).map_or(f64::NAN, |g| g.norm())).collect()).collect();
    let total = (f * frames.len()) as f64;

    let peak = amps.iter().flatten().copied().filter(|a| a.is_finite()).fold(0.0, f64::max);
    let at_peak = amps.iter().flatten().filter(|&&a| peak > 0.0 && a >= peak * (1.0 - 1e-9)).count();
    let clipped = if at_peak as f64 > CLIP_SHARE * total { at_peak } else { 0 };
    let broken = amps.iter().flatten().filter(|&&a| !a.is_finite() || a == 0.0).count();
    let bad_fraction = (broken + clipped) as f64 / total;

    let mut degenerate = 0usize;
    let mut kurt = Vec::new();
    for row in &amps {
        let power: Vec<f64> = row.iter().filter(|a| a.is_finite()).map(|a| a * a).collect();
        let n = power.len() as f64;
        if power.len() < 4 {
            degenerate += 1;
            continue;
        }
        let mean = power.iter().sum::<f64>() / n;
        let m2 = power.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        if m2 < DEGENERATE_EPS * mean * mean || m2 == 0.0 {
            degenerate += 1;
            continue;
        }
        let m4 = power.iter().map(|p| (p - mean).powi(4)).sum::<f64>() / n;
        kurt.push(m4 / (m2 * m2) - 3.0);
    }
    let degenerate_fraction = degenerate as f64 / f as f64;
    // held at f32 like the ACF values so gain scaling cannot move the score
    let excess_kurtosis = if kurt.is_empty() { 0.0 } else { (kurt.iter().sum::<f64>() / kurt.len() as f64) as f32 as f64 };
    let score = 100.0
        * (1.0 - bad_fraction / BAD_SAMPLE_MAX).max(0.0)
        * (1.0 - degenerate_fraction)
        * (1.0 - excess_kurtosis.abs() / KURTOSIS_SCALE).max(0.0);
    Ok(AmplitudeScore { score, bad_fraction, degenerate_fraction, excess_kurtosis })
}
