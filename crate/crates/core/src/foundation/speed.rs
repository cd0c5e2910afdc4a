use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::bessel::{bessel_j0, golden_max, BESSEL_X0};
use super::{combine_mrc, AcfCurve, Threshold};

/// Moving-average width applied to the ACF differential.
pub const SMOOTHING_TAPS: usize = 5;
/// Minimum prominence (in units of the normalised differential) of the
/// differential peak.
pub const PROMINENCE_FLOOR: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedConfig {
    pub threshold: Threshold,
    pub smoothing_taps: usize,
    pub prominence_floor: f64,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        Self { threshold: Threshold::default(), smoothing_taps: SMOOTHING_TAPS, prominence_floor: PROMINENCE_FLOOR }
    }
}

/// Result of one speed estimate; `speed_mps` is `None` when the curve shows
/// no qualifying differential peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEntry {
    pub time_s: f64,
    pub speed_mps: Option<f64>,
    pub peak_lag_s: Option<f64>,
    pub peak_quality: f64,
}

impl SpeedEntry {
    pub fn absent(time_s: f64) -> Self {
        Self { time_s, speed_mps: None, peak_lag_s: None, peak_quality: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedTrace {
    pub entries: Vec<SpeedEntry>,
    pub bessel_constant: f64,
}

impl Default for SpeedTrace {
    fn default() -> Self {
        Self { entries: Vec::new(), bessel_constant: BESSEL_X0 }
    }
}

impl SpeedTrace {
    pub fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().filter_map(|e| e.speed_mps)
    }
}

pub fn estimate_speed(acf: &AcfCurve, wavelength_m: f64) -> SpeedEntry {
    estimate_speed_with(acf, wavelength_m, &SpeedConfig::default())
}

/// Locates the first peak of the (smoothed) ACF differential and converts
/// it to a speed with `v = x0 lambda / (2 pi tau_peak)`.
///
/// The discrete peak is refined by a least-squares fit of
/// `a (1 - tau/n) J0(k v tau)` to the combined curve in a bracket around the
/// coarse speed; `(1 - tau/n)` is the expectation of the biased estimator.
/// The reported `peak_lag_s` is the differential peak of the fitted curve.
pub fn estimate_speed_with(acf: &AcfCurve, wavelength_m: f64, cfg: &SpeedConfig) -> SpeedEntry {
    let mut entry = SpeedEntry::absent(0.0);
    if !(wavelength_m.is_finite() && wavelength_m > 0.0) || acf.lag_count < 4 {
        return entry;
    }
    let owned;
    let values: Vec<f64> = match acf.combined_values() {
        Some(v) => v.iter().map(|&x| x as f64).collect(),
        None => {
            owned = combine_mrc(acf.clone());
            owned.combined_values().expect("combined").iter().map(|&x| x as f64).collect()
        }
    };
    let first = values[0];
    if !(first > cfg.threshold.resolve(acf.sample_count)) || first <= 0.0 {
        return entry;
    }
    let dt = acf.sample_interval_s;
    let diff: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / first).collect();
    let smooth = moving_average(&diff, cfg.smoothing_taps.max(1));
    let Some((peak, prominence)) = first_prominent_peak(&smooth, cfg.prominence_floor) else {
        return entry;
    };
    let offset = parabolic_offset(smooth[peak - 1], smooth[peak], smooth[peak + 1]);
    // diff[i] sits between lags (i+1) dt and (i+2) dt
    let coarse_lag = (peak as f64 + 1.5 + offset) * dt;
    let k = 2.0 * PI / wavelength_m;
    let coarse_speed = BESSEL_X0 / (k * coarse_lag);
    let refined = refine_speed(&values, dt, acf.sample_count, k, coarse_speed);

    let peak_lag_s = BESSEL_X0 / (k * refined);
    let span = smooth.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - smooth.iter().cloned().fold(f64::INFINITY, f64::min);
    entry.speed_mps = Some(BESSEL_X0 * wavelength_m / (2.0 * PI * peak_lag_s));
    entry.peak_lag_s = Some(peak_lag_s);
    entry.peak_quality = if span > 0.0 { (prominence / span).clamp(0.0, 1.0) } else { 0.0 };
    entry
}

fn moving_average(xs: &[f64], taps: usize) -> Vec<f64> {
    let half = taps / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(xs.len());
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// First interior local maximum that is positive and whose topographic
/// prominence reaches `floor`. Ties resolve to the smallest index.
fn first_prominent_peak(xs: &[f64], floor: f64) -> Option<(usize, f64)> {
    for i in 1..xs.len().saturating_sub(1) {
        if !(xs[i] > xs[i - 1] && xs[i] >= xs[i + 1] && xs[i] > 0.0) {
            continue;
        }
        let left_min = xs[..=i].iter().cloned().fold(f64::INFINITY, f64::min);
        let mut right_min = xs[i];
        for &x in &xs[i + 1..] {
            if x > xs[i] {
                break;
            }
            right_min = right_min.min(x);
        }
        let prominence = xs[i] - left_min.max(right_min);
        if prominence >= floor {
            return Some((i, prominence));
        }
    }
    None
}

fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    }
}

fn refine_speed(values: &[f64], dt: f64, sample_count: Option<usize>, k: f64, coarse: f64) -> f64 {
    let taper = |lag: usize| match sample_count {
        Some(n) => 1.0 - lag as f64 / n as f64,
        None => 1.0,
    };
    let reach = (BESSEL_X0 + 2.5) / (k * coarse * dt);
    let fit_lags = (reach.ceil() as usize).clamp(4, values.len());
    // explained energy (S.m)^2 / (m.m); maximising it minimises the residual
    let explained = |v: f64| {
        let (mut sm, mut mm) = (0.0, 0.0);
        for (i, s) in values[..fit_lags].iter().enumerate() {
            let lag = i + 1;
            let m = taper(lag) * bessel_j0(k * v * lag as f64 * dt);
            sm += s * m;
            mm += m * m;
        }
        if mm > 0.0 && sm > 0.0 {
            sm * sm / mm
        } else {
            0.0
        }
    };
    let (lo, hi) = (0.75 * coarse, 1.35 * coarse);
    let steps = 60;
    let step = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|i| lo + i as f64 * step)
        .map(|v| (v, explained(v)))
        .fold((coarse, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc })
        .0;
    golden_max(explained, (best - step).max(lo), (best + step).min(hi), 1e-13)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_curve(v: f64, rate: f64, lags: usize, scale: f64) -> AcfCurve {
        let k = 2.0 * PI / 0.0517;
        let dt = 1.0 / rate;
        let values: Vec<f64> = (1..=lags).map(|l| scale * bessel_j0(k * v * l as f64 * dt)).collect();
        AcfCurve::from_combined(dt, None, &values)
    }

    #[test]
    fn analytic_curve_closes_to_injected_speed() {
        for &v in &[0.3, 0.5, 1.0, 1.5, 2.0, 2.5] {
            for &scale in &[1.0, 0.4, 0.05] {
                let est = estimate_speed(&model_curve(v, 500.0, 100, scale), 0.0517);
                let got = est.speed_mps.expect("estimate");
                assert!(((got - v) / v).abs() < 1e-6, "v={v} scale={scale} got {got}");
                let lag = est.peak_lag_s.unwrap();
                assert!((got - BESSEL_X0 * 0.0517 / (2.0 * PI * lag)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_proportionality_on_model() {
        let slow = estimate_speed(&model_curve(0.5, 500.0, 100, 0.6), 0.0517).peak_lag_s.unwrap();
        let fast = estimate_speed(&model_curve(2.0, 500.0, 100, 0.6), 0.0517).peak_lag_s.unwrap();
        assert!((slow / fast - 4.0).abs() < 1e-5);
    }

    #[test]
    fn flat_curve_has_no_estimate() {
        let acf = AcfCurve::from_combined(0.002, Some(200), &[0.0; 100]);
        let est = estimate_speed(&acf, 0.0517);
        assert_eq!(est.speed_mps, None);
        assert_eq!(est.peak_quality, 0.0);
    }

    #[test]
    fn monotone_decay_has_no_estimate() {
        let values: Vec<f64> = (1..=100).map(|l| 0.9 * (-(l as f64) / 30.0).exp()).collect();
        let est = estimate_speed(&AcfCurve::from_combined(0.002, Some(3000), &values), 0.0517);
        assert_eq!(est.speed_mps, None);
    }

    #[test]
    fn peak_search_prefers_smallest_lag_and_respects_floor() {
        let xs = [0.0, 0.5, 0.0, 0.5, 0.0];
        assert_eq!(first_prominent_peak(&xs, 0.1).unwrap().0, 1);
        assert!(first_prominent_peak(&[0.0, 0.01, 0.0], 0.02).is_none());
    }
}
