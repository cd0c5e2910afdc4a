use serde::{Deserialize, Serialize};

use crate::foundation::{sample_acf, AcfCurve, MotionDecision, SpeedTrace, WindowAnalysis};

/// Minimum prominence of a speed-autocorrelation peak that counts as gait.
pub const GAIT_PROMINENCE: f64 = 0.3;
/// Lag band searched for the stride period, seconds.
pub const GAIT_LAG_BAND_S: (f64, f64) = (0.2, 2.5);
/// Prominence an extremum of S(tau) needs before it is counted.
pub const ACF_EXTREMUM_PROMINENCE: f64 = 0.05;

pub const FEATURE_COUNT: usize = 13;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "gait_present",
    "stride_length_m",
    "stride_cycle_s",
    "speed_mean",
    "speed_var",
    "speed_p25",
    "speed_p75",
    "acf_peak_mean",
    "acf_valley_mean",
    "acf_peak_interval_s",
    "acf_valley_interval_s",
    "ms_mean",
    "ms_var",
];

/// Seven physical and six statistical features of one window. Stride fields
/// are 0 when no gait was found.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub gait_present: bool,
    pub stride_length_m: f64,
    pub stride_cycle_s: f64,
    pub speed_mean: f64,
    pub speed_var: f64,
    pub speed_p25: f64,
    pub speed_p75: f64,
    pub acf_peak_mean: f64,
    pub acf_valley_mean: f64,
    pub acf_peak_interval_s: f64,
    pub acf_valley_interval_s: f64,
    pub ms_mean: f64,
    pub ms_var: f64,
}

impl FeatureVector {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            if self.gait_present { 1.0 } else { 0.0 },
            self.stride_length_m,
            self.stride_cycle_s,
            self.speed_mean,
            self.speed_var,
            self.speed_p25,
            self.speed_p75,
            self.acf_peak_mean,
            self.acf_valley_mean,
            self.acf_peak_interval_s,
            self.acf_valley_interval_s,
            self.ms_mean,
            self.ms_var,
        ]
    }

    /// Inverse of [`to_array`](Self::to_array); any nonzero gait entry reads as present.
    pub fn from_array(a: [f64; FEATURE_COUNT]) -> Self {
        Self {
            gait_present: a[0] != 0.0,
            stride_length_m: a[1],
            stride_cycle_s: a[2],
            speed_mean: a[3],
            speed_var: a[4],
            speed_p25: a[5],
            speed_p75: a[6],
            acf_peak_mean: a[7],
            acf_valley_mean: a[8],
            acf_peak_interval_s: a[9],
            acf_valley_interval_s: a[10],
            ms_mean: a[11],
            ms_var: a[12],
        }
    }

    /// Index of the first non-finite component.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.to_array().iter().position(|v| !v.is_finite())
    }

    pub fn csv_header() -> String {
        FEATURE_NAMES.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.to_array().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Features of one analysed window.
pub fn features_of(analysis: &WindowAnalysis) -> FeatureVector {
    extract_features(&analysis.speeds, &analysis.acf_queue, &analysis.ms_history)
}

/// Builds the feature vector from a window's speed queue, ACF queue and
/// motion-statistic history. A window in which no sub-span tested as motion
/// yields the zero vector.
pub fn extract_features(speeds: &SpeedTrace, acf_history: &[AcfCurve], ms_history: &[MotionDecision]) -> FeatureVector {
    if !ms_history.iter().any(MotionDecision::is_motion) {
        return FeatureVector::zero();
    }
    let mut fv = FeatureVector::zero();

    let values: Vec<f64> = speeds.speeds().collect();
    if !values.is_empty() {
        let (mean, var) = mean_var(&values);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        fv.speed_mean = mean;
        fv.speed_var = var;
        fv.speed_p25 = percentile(&sorted, 0.25);
        fv.speed_p75 = percentile(&sorted, 0.75);
    }
    if values.len() >= 3 {
        if let Some(cycle) = gait_cycle(speeds) {
            fv.gait_present = true;
            fv.stride_cycle_s = cycle;
            fv.stride_length_m = fv.speed_mean * cycle;
        }
    }

    let (peaks, valleys) = acf_extrema(acf_history);
    fv.acf_peak_mean = peaks.mean_value;
    fv.acf_peak_interval_s = peaks.mean_interval_s;
    fv.acf_valley_mean = valleys.mean_value;
    fv.acf_valley_interval_s = valleys.mean_interval_s;

    let ms: Vec<f64> = ms_history.iter().map(|d| d.motion_statistic).collect();
    let (m, v) = mean_var(&ms);
    fv.ms_mean = m;
    fv.ms_var = v;
    fv
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Linear-interpolation percentile of sorted data (`q` in [0,1]).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Interior local maxima of `xs` with their topographic prominence, keeping
/// those at or above `min_prominence`.
pub fn prominent_peaks(xs: &[f64], min_prominence: f64) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for i in 1..xs.len().saturating_sub(1) {
        if !(xs[i] > xs[i - 1] && xs[i] >= xs[i + 1]) {
            continue;
        }
        let mut left = xs[i];
        for &x in xs[..i].iter().rev() {
            if x > xs[i] {
                break;
            }
            left = left.min(x);
        }
        let mut right = xs[i];
        for &x in &xs[i + 1..] {
            if x > xs[i] {
                break;
            }
            right = right.min(x);
        }
        let prominence = xs[i] - left.max(right);
        if prominence >= min_prominence {
            out.push((i, prominence));
        }
    }
    out
}

/// Stride period from the autocorrelation of the speed series, or `None`
/// without a periodic component.
fn gait_cycle(speeds: &SpeedTrace) -> Option<f64> {
    let entries = &speeds.entries;
    if entries.len() < 3 {
        return None;
    }
    let hop = (entries[entries.len() - 1].time_s - entries[0].time_s) / (entries.len() - 1) as f64;
    if !(hop > 0.0) {
        return None;
    }
    let series = fill_gaps(&entries.iter().map(|e| e.speed_mps).collect::<Vec<_>>())?;
    let max_lag = ((GAIT_LAG_BAND_S.1 / hop).floor() as usize + 1).min(series.len() - 1);
    let mut acf = vec![1.0];
    acf.extend(sample_acf(&series, max_lag)?);
    let (lo, hi) = GAIT_LAG_BAND_S;
    prominent_peaks(&acf, GAIT_PROMINENCE).into_iter().find_map(|(i, _)| {
        let lag = (i as f64 + parabolic_offset(acf[i - 1], acf[i], acf[i + 1])) * hop;
        (lo..=hi).contains(&lag).then_some(lag)
    })
}

fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den.abs() < 1e-15 {
        0.0
    } else {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

/// Linear interpolation over missing estimates; edges hold the nearest value.
fn fill_gaps(xs: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<(usize, f64)> = xs.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect();
    let (&(first_i, first_v), &(last_i, last_v)) = (known.first()?, known.last()?);
    let mut out = vec![0.0; xs.len()];
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i <= first_i {
            first_v
        } else if i >= last_i {
            last_v
        } else {
            let k = known.partition_point(|&(j, _)| j <= i);
            let (i0, v0) = known[k - 1];
            if i0 == i {
                v0
            } else {
                let (i1, v1) = known[k];
                v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
            }
        };
    }
    Some(out)
}

struct Extrema {
    mean_value: f64,
    mean_interval_s: f64,
}

/// Peak and valley statistics of the combined curves (lag 0 included as 1).
fn acf_extrema(history: &[AcfCurve]) -> (Extrema, Extrema) {
    let mut peak_values = Vec::new();
    let mut peak_gaps = Vec::new();
    let mut valley_values = Vec::new();
    let mut valley_gaps = Vec::new();
    for curve in history {
        let Some(values) = curve.combined_values() else { continue };
        let mut s = vec![1.0];
        s.extend(values.iter().map(|&v| v as f64));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        for (list, gaps, found) in [
            (&mut peak_values, &mut peak_gaps, prominent_peaks(&s, ACF_EXTREMUM_PROMINENCE)),
            (&mut valley_values, &mut valley_gaps, prominent_peaks(&neg, ACF_EXTREMUM_PROMINENCE)),
        ] {
            list.extend(found.iter().map(|&(i, _)| s[i]));
            gaps.extend(found.windows(2).map(|w| (w[1].0 - w[0].0) as f64 * curve.sample_interval_s));
        }
    }
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    (
        Extrema { mean_value: mean(&peak_values), mean_interval_s: mean(&peak_gaps) },
        Extrema { mean_value: mean(&valley_values), mean_interval_s: mean(&valley_gaps) },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foundation::SpeedEntry;

    fn trace(values: &[Option<f64>], hop: f64) -> SpeedTrace {
        SpeedTrace {
            entries: values
                .iter()
                .enumerate()
                .map(|(i, v)| SpeedEntry { time_s: i as f64 * hop, speed_mps: *v, peak_lag_s: None, peak_quality: 0.5 })
                .collect(),
            ..SpeedTrace::default()
        }
    }

    fn moving() -> Vec<MotionDecision> {
        vec![MotionDecision::new(0.8, 0.1); 5]
    }

    #[test]
    fn percentile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.25), 1.75);
        assert_eq!(percentile(&xs, 0.75), 3.25);
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&[5.0], 0.3), 5.0);
    }

    #[test]
    fn prominence_is_topographic() {
        let xs = [0.0, 1.0, 0.5, 2.0, 0.0];
        let p = prominent_peaks(&xs, 0.0);
        assert_eq!(p, vec![(1, 0.5), (3, 2.0)]);
        assert_eq!(prominent_peaks(&xs, 0.6), vec![(3, 2.0)]);
    }

    #[test]
    fn gaps_are_interpolated() {
        let filled = fill_gaps(&[None, Some(1.0), None, None, Some(4.0), None]).unwrap();
        assert_eq!(filled, vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(fill_gaps(&[None, None]).is_none());
    }

    #[test]
    fn periodic_speed_gives_gait() {
        let hop = 0.1;
        let v: Vec<Option<f64>> = (0..57)
            .map(|i| Some(1.2 * (1.0 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 * hop / 1.1).cos())))
            .collect();
        let fv = extract_features(&trace(&v, hop), &[], &moving());
        assert!(fv.gait_present);
        assert!((fv.stride_cycle_s - 1.1).abs() < 0.05, "{}", fv.stride_cycle_s);
        assert!((fv.stride_length_m - fv.speed_mean * fv.stride_cycle_s).abs() < 1e-12);
        assert!(fv.speed_p25 <= fv.speed_p75);
    }

    #[test]
    fn constant_speed_has_no_gait() {
        let v = vec![Some(0.3); 57];
        let fv = extract_features(&trace(&v, 0.1), &[], &moving());
        assert!(!fv.gait_present);
        assert_eq!(fv.stride_cycle_s, 0.0);
        assert_eq!(fv.stride_length_m, 0.0);
        assert!(fv.speed_var < 1e-20);
        assert!((fv.speed_mean - 0.3).abs() < 1e-12);
    }

    #[test]
    fn too_few_estimates_use_sentinel() {
        let mut v = vec![None; 57];
        v[3] = Some(1.0);
        v[9] = Some(1.4);
        let fv = extract_features(&trace(&v, 0.1), &[], &moving());
        assert!(!fv.gait_present);
        assert_eq!(fv.stride_length_m, 0.0);
        assert!((fv.speed_mean - 1.2).abs() < 1e-12);
    }

    #[test]
    fn static_history_is_zero_vector() {
        let v = vec![Some(1.0); 10];
        let ms = vec![MotionDecision::new(0.01, 0.1); 10];
        assert_eq!(extract_features(&trace(&v, 0.1), &[], &ms), FeatureVector::zero());
    }

    #[test]
    fn acf_extrema_read_a_cosine() {
        let dt = 0.002;
        let vals: Vec<f64> = (1..=100).map(|l| 0.8 * (2.0 * std::f64::consts::PI * l as f64 * dt / 0.04).cos()).collect();
        let curve = crate::foundation::combine_mrc(AcfCurve::from_combined(dt, Some(200), &vals));
        let fv = extract_features(&SpeedTrace::default(), &[curve], &moving());
        assert!((fv.acf_peak_interval_s - 0.04).abs() < 1e-9, "{}", fv.acf_peak_interval_s);
        assert!((fv.acf_valley_interval_s - 0.04).abs() < 1e-9);
        assert!((fv.acf_valley_mean + 0.8).abs() < 1e-6);
        // lag 0 is an endpoint, so only interior peaks at 0.8 count
        assert!((fv.acf_peak_mean - 0.8).abs() < 1e-6);
    }

    #[test]
    fn array_round_trip() {
        let fv = FeatureVector { gait_present: true, stride_length_m: 1.3, ms_var: 0.2, ..FeatureVector::zero() };
        assert_eq!(FeatureVector::from_array(fv.to_array()), fv);
        assert_eq!(FeatureVector::csv_header().split(',').count(), FEATURE_COUNT);
        assert_eq!(fv.to_csv_row().split(',').count(), FEATURE_COUNT);
        assert_eq!(fv.first_non_finite(), None);
        let bad = FeatureVector { speed_var: f64::NAN, ..fv };
        assert_eq!(bad.first_non_finite(), Some(4));
    }
}
