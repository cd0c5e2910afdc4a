use serde::{Deserialize, Serialize};

use super::{PowerWindow, SensingError};

/// `sigma^2 < DEGENERATE_EPS * mu^2` marks a subcarrier as static.
pub const DEGENERATE_EPS: f64 = 1e-12;
/// One-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.326_347_874_040_840_8;

/// Per-subcarrier and combined autocorrelation of the power response over
/// lags `dt, 2 dt, ..., L dt`. Values are held at 32-bit precision, which is
/// also their wire precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfCurve {
    pub sample_interval_s: f64,
    /// Samples behind the biased estimate; `None` for a noiseless model curve.
    pub sample_count: Option<usize>,
    pub lag_count: usize,
    pub rows: Vec<Vec<f32>>,
    pub degenerate: Vec<bool>,
    pub combined: Option<Combined>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combined {
    pub weights: Vec<f64>,
    pub values: Vec<f32>,
}

impl AcfCurve {
    pub fn lags_s(&self) -> Vec<f64> {
        (1..=self.lag_count).map(|l| l as f64 * self.sample_interval_s).collect()
    }

    pub fn subcarrier_count(&self) -> usize {
        self.rows.len()
    }

    /// A curve carrying only a combined trace (e.g. decoded from an upload or
    /// evaluated from the analytic model).
    pub fn from_combined(sample_interval_s: f64, sample_count: Option<usize>, values: &[f64]) -> Self {
        let values: Vec<f32> = values.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect();
        Self {
            sample_interval_s,
            sample_count,
            lag_count: values.len(),
            rows: vec![values.clone()],
            degenerate: vec![false],
            combined: Some(Combined { weights: vec![1.0], values }),
        }
    }

    pub fn combined_values(&self) -> Option<&[f32]> {
        self.combined.as_ref().map(|c| c.values.as_slice())
    }
}

/// Biased sample ACF of one sequence. Returns `None` for degenerate input.
pub fn sample_acf(xs: &[f64], lag_count: usize) -> Option<Vec<f64>> {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let energy: f64 = centred.iter().map(|c| c * c).sum();
    if !(energy / n as f64 >= DEGENERATE_EPS * mean * mean) || energy == 0.0 {
        return None;
    }
    Some(
        (1..=lag_count)
            .map(|lag| {
                let cov: f64 = centred[lag..].iter().zip(&centred[..n - lag]).map(|(a, b)| a * b).sum();
                (cov / energy).clamp(-1.0, 1.0)
            })
            .collect(),
    )
}

/// ACF of a set of equally sampled sequences (one per subcarrier).
pub fn acf_of_series(series: &[Vec<f64>], sample_interval_s: f64, max_lag_s: f64) -> Result<AcfCurve, SensingError> {
    let n = series.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(SensingError::WindowTooShort { have: n, need: 2 });
    }
    let lag_count = (max_lag_s / sample_interval_s + 1e-9).floor() as usize;
    if lag_count == 0 || !max_lag_s.is_finite() {
        return Err(SensingError::LagTooLarge { max_lag_s, span_s: n as f64 * sample_interval_s });
    }
    if 2 * lag_count > n {
        return Err(SensingError::LagTooLarge { max_lag_s, span_s: n as f64 * sample_interval_s });
    }
    let mut rows = Vec::with_capacity(series.len());
    let mut degenerate = Vec::with_capacity(series.len());
    for s in series {
        match sample_acf(s, lag_count) {
            Some(r) => {
                rows.push(r.into_iter().map(|v| v as f32).collect());
                degenerate.push(false);
            }
            None => {
                rows.push(vec![0.0; lag_count]);
                degenerate.push(true);
            }
        }
    }
    Ok(AcfCurve { sample_interval_s, sample_count: Some(n), lag_count, rows, degenerate, combined: None })
}

/// Per-subcarrier ACF over everything currently in the window.
pub fn compute_acf(window: &PowerWindow, max_lag_s: f64) -> Result<AcfCurve, SensingError> {
    acf_of_series(&window.series(), window.sample_interval_s(), max_lag_s)
}

/// Per-subcarrier ACF over the trailing `span` samples of the window.
pub fn compute_acf_recent(window: &PowerWindow, span: usize, max_lag_s: f64) -> Result<AcfCurve, SensingError> {
    acf_of_series(&window.recent_series(span), window.sample_interval_s(), max_lag_s)
}

/// Maximal ratio combining: `w(f) ∝ max(phi(f), 0)` with `phi(f)` the
/// first-lag value, zero weight on degenerate subcarriers, uniform weights
/// when no subcarrier has a positive statistic.
pub fn combine_mrc(mut acf: AcfCurve) -> AcfCurve {
    let raw: Vec<f64> = acf
        .rows
        .iter()
        .zip(&acf.degenerate)
        .map(|(row, &deg)| if deg { 0.0 } else { row.first().map_or(0.0, |&v| (v as f64).max(0.0)) })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights = if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        uniform_weights(&acf.degenerate)
    };
    acf.combined = Some(Combined { values: weighted_sum(&acf.rows, &weights, acf.lag_count), weights });
    acf
}

/// Plain average over non-degenerate subcarriers.
pub fn combine_uniform(mut acf: AcfCurve) -> AcfCurve {
    let weights = uniform_weights(&acf.degenerate);
    acf.combined = Some(Combined { values: weighted_sum(&acf.rows, &weights, acf.lag_count), weights });
    acf
}

fn uniform_weights(degenerate: &[bool]) -> Vec<f64> {
    let live = degenerate.iter().filter(|d| !**d).count();
    if live == 0 {
        let n = degenerate.len().max(1) as f64;
        return vec![1.0 / n; degenerate.len()];
    }
    degenerate.iter().map(|&d| if d { 0.0 } else { 1.0 / live as f64 }).collect()
}

fn weighted_sum(rows: &[Vec<f32>], weights: &[f64], lag_count: usize) -> Vec<f32> {
    (0..lag_count)
        .map(|l| rows.iter().zip(weights).map(|(r, w)| w * r[l] as f64).sum::<f64>().clamp(-1.0, 1.0) as f32)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Motion,
    Static,
}

impl Verdict {
    pub fn is_motion(self) -> bool {
        self == Verdict::Motion
    }
}

/// Decision threshold for the motion statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// `eta = z / sqrt(n)`: the null distribution of the lag-one sample
    /// autocorrelation of white noise is approximately `N(0, 1/n)`.
    Quantile { z: f64 },
    Fixed { eta: f64 },
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Quantile { z: Z_99 }
    }
}

impl Threshold {
    pub fn resolve(&self, sample_count: Option<usize>) -> f64 {
        match *self {
            Threshold::Fixed { eta } => eta,
            Threshold::Quantile { z } => match sample_count {
                Some(n) if n > 0 => z / (n as f64).sqrt(),
                _ => 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionDecision {
    pub motion_statistic: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl MotionDecision {
    pub fn new(motion_statistic: f64, threshold: f64) -> Self {
        let verdict = if motion_statistic > threshold { Verdict::Motion } else { Verdict::Static };
        Self { motion_statistic, threshold, verdict }
    }

    pub fn is_motion(&self) -> bool {
        self.verdict.is_motion()
    }
}

/// MRC-weighted mean of the per-subcarrier first-lag statistics (the
/// combined curve at the first lag), tested against the default threshold.
pub fn motion_statistic(acf: &AcfCurve) -> MotionDecision {
    motion_statistic_with(acf, &Threshold::default())
}

pub fn motion_statistic_with(acf: &AcfCurve, threshold: &Threshold) -> MotionDecision {
    let eta = threshold.resolve(acf.sample_count);
    if acf.lag_count == 0 || acf.rows.is_empty() {
        return MotionDecision::new(0.0, eta);
    }
    let owned;
    let combined = match &acf.combined {
        Some(c) => c,
        None => {
            owned = combine_mrc(acf.clone());
            owned.combined.as_ref().expect("combined by combine_mrc")
        }
    };
    // S(dt) is the MRC-weighted mean of phi(f), held at curve precision
    MotionDecision::new(combined.values[0] as f64, eta)
}
