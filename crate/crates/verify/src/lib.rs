//! Reference computations written independently of the library code they
//! check, plus small helpers for the acceptance run.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use homesense::channel_sim::CsiFrame;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// J0 from its integral form `(1/pi) int_0^pi cos(x sin t) dt`, composite
/// Simpson with 4000 panels.
pub fn j0_integral(x: f64) -> f64 {
    let n = 4000;
    let h = PI / n as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut s = f(0.0) + f(PI);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 / PI
}

/// Per-subcarrier power series, one row per subcarrier.
pub fn power_rows(frames: &[CsiFrame]) -> Vec<Vec<f64>> {
    let f = frames.first().map_or(0, |fr| fr.gains.len());
    (0..f).map(|i| frames.iter().map(|fr| fr.gains[i].norm_sqr()).collect()).collect()
}

/// Lag-1 correlation of each row, combined with weights proportional to
/// the positive part of each row's own value. Flat rows are left out.
pub fn lag1_combined(rows: &[Vec<f64>]) -> f64 {
    let mut rho = Vec::new();
    for r in rows {
        let n = r.len() as f64;
        let m = r.iter().sum::<f64>() / n;
        let d: Vec<f64> = r.iter().map(|x| x - m).collect();
        let den: f64 = d.iter().map(|x| x * x).sum();
        if den <= 1e-12 * m * m * n || den == 0.0 {
            continue;
        }
        let num: f64 = d.windows(2).map(|w| w[0] * w[1]).sum();
        rho.push(num / den);
    }
    let wsum: f64 = rho.iter().map(|r| r.max(0.0)).sum();
    if wsum == 0.0 {
        return rho.iter().sum::<f64>() / rho.len().max(1) as f64;
    }
    rho.iter().map(|r| r.max(0.0) * r).sum::<f64>() / wsum
}

pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// SNR in dB of a combined ACF against the best-scaled template
/// `J0(k v tau)`: template energy over residual energy.
pub fn template_snr_db(values: &[f32], dt: f64, k: f64, v: f64) -> f64 {
    let m: Vec<f64> = (1..=values.len()).map(|l| j0_integral(k * v * l as f64 * dt)).collect();
    let s: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    let a = s.iter().zip(&m).map(|(x, y)| x * y).sum::<f64>() / m.iter().map(|y| y * y).sum::<f64>();
    let sig: f64 = m.iter().map(|y| (a * y).powi(2)).sum();
    let res: f64 = s.iter().zip(&m).map(|(x, y)| (x - a * y).powi(2)).sum();
    10.0 * (sig / res).log10()
}

/// Rotates every gain by an independent random phase and scales it by
/// `scale`.
pub fn corrupt_phase_and_scale(frames: &[CsiFrame], seed: u64, scale: f64) -> Vec<CsiFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    frames
        .iter()
        .map(|f| {
            let mut g = f.clone();
            for h in &mut g.gains {
                let theta = rng.random::<f64>() * 2.0 * PI;
                *h = *h * Complex64::from_polar(scale, theta);
            }
            g
        })
        .collect()
}

/// Replaces every gain with the same constant amplitude.
pub fn constant_amplitude(frames: &[CsiFrame]) -> Vec<CsiFrame> {
    frames
        .iter()
        .map(|f| CsiFrame { gains: vec![Complex64::new(1.0, 0.0); f.gains.len()], ..f.clone() })
        .collect()
}

/// Per-region `(windows, detected)` from an NDJSON event log read as plain
/// JSON. A window belongs to every region occupied at its midpoint and is
/// detected when any event in it has a motion verdict.
pub fn recount_coverage(
    ndjson: &str,
    presence: &[(u16, f64, f64)],
    window_len_s: f64,
) -> BTreeMap<u16, (usize, usize)> {
    let mut motion: BTreeSet<u64> = BTreeSet::new();
    for line in ndjson.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).expect("event json");
        if v["verdict"] == "motion" {
            motion.insert(v["window_index"].as_u64().expect("window index"));
        }
    }
    let end = presence.iter().map(|p| p.2).fold(0.0, f64::max);
    let mut out: BTreeMap<u16, (usize, usize)> = presence.iter().map(|p| (p.0, (0, 0))).collect();
    let mut k = 0u64;
    while (k as f64) * window_len_s < end {
        let mid = (k as f64 + 0.5) * window_len_s;
        for (region, t) in out.iter_mut() {
            if presence.iter().any(|p| p.0 == *region && p.1 <= mid && mid < p.2) {
                t.0 += 1;
                t.1 += usize::from(motion.contains(&k));
            }
        }
        k += 1;
    }
    out
}

/// Keeps only the events of the given devices.
pub fn filter_ndjson(ndjson: &str, devices: &[u16]) -> String {
    let mut out = String::new();
    for line in ndjson.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("event json");
        if devices.contains(&(v["device_id"].as_u64().expect("device") as u16)) {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}
