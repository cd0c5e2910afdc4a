use serde::{Deserialize, Serialize};

use crate::foundation::{PowerWindow, DEGENERATE_EPS};

pub const DEFAULT_PROXIMITY_THRESHOLD: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityReading {
    pub device_id: u16,
    pub window_end_s: f64,
    pub proximity_score: f64,
    pub near: bool,
}

pub fn proximity_score(window: &PowerWindow, device_id: u16) -> ProximityReading {
    proximity_score_with(window, device_id, DEFAULT_PROXIMITY_THRESHOLD)
}

/// Mean pairwise Pearson correlation of the per-subcarrier power sequences,
/// clamped to `[0, 1]`. Subcarriers with no variance are left out; fewer
/// than two usable subcarriers give 0.
pub fn proximity_score_with(window: &PowerWindow, device_id: u16, threshold: f64) -> ProximityReading {
    let window_end_s = window.timestamps().back().copied().unwrap_or(0.0);
    let score = mean_pairwise_correlation(&window.series()).clamp(0.0, 1.0);
    ProximityReading { device_id, window_end_s, proximity_score: score, near: score > threshold }
}

fn mean_pairwise_correlation(series: &[Vec<f64>]) -> f64 {
    let centred: Vec<Vec<f64>> = series
        .iter()
        .filter_map(|s| {
            let n = s.len() as f64;
            if s.len() < 2 {
                return None;
            }
            let mean = s.iter().sum::<f64>() / n;
            let c: Vec<f64> = s.iter().map(|x| x - mean).collect();
            let energy = c.iter().map(|x| x * x).sum::<f64>();
            if energy / n < DEGENERATE_EPS * mean * mean || energy == 0.0 {
                return None;
            }
            let norm = energy.sqrt();
            Some(c.into_iter().map(|x| x / norm).collect())
        })
        .collect();
    if centred.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..centred.len() {
        for j in i + 1..centred.len() {
            total += centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum::<f64>();
            pairs += 1;
        }
    }
    total / pairs as f64
}
