use std::f64::consts::PI;

use homesense::channel_sim::{generate_trace, ChannelConfig, CsiFrame, ImpairmentConfig, SubjectProfile};
use homesense::foundation::{analyze_window, combine_uniform, compute_acf, PowerWindow, SensingConfig};
use proptest::prelude::*;

fn j0(x: f64) -> f64 {
    let n = 2000;
    let h = PI / n as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut s = f(0.0) + f(PI);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 / PI
}

fn lag1(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let d: Vec<f64> = xs.iter().map(|x| x - m).collect();
    d.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / d.iter().map(|x| x * x).sum::<f64>()
}

fn window_of(frames: &[CsiFrame], len_s: f64, rate: f64) -> PowerWindow {
    let mut w = PowerWindow::new(len_s, rate).unwrap();
    for f in frames {
        w.update(f).unwrap();
    }
    w
}

#[test]
fn static_power_is_white() {
    let n = 600;
    let bound = 4.0 / (n as f64).sqrt();
    let (mut inside, mut total) = (0usize, 0usize);
    for seed in 0..1000 {
        let cfg = ChannelConfig::new(seed).with_sample_rate(100.0);
        let frames = generate_trace(&cfg, &SubjectProfile::none(), 6.0, &ImpairmentConfig::none()).unwrap();
        assert_eq!(frames.len(), n);
        for f in 0..cfg.subcarrier_count {
            let xs: Vec<f64> = frames.iter().map(|fr| fr.gains[f].norm_sqr()).collect();
            inside += usize::from(lag1(&xs).abs() <= bound);
            total += 1;
        }
    }
    let share = inside as f64 / total as f64;
    assert!(share >= 0.99, "{share}");
}

#[test]
fn uniform_combination_follows_the_bessel_model() {
    let ratio_db = 10.0;
    let mut cfg = ChannelConfig::new(5).with_sample_rate(100.0).with_paths(100);
    cfg.uniform_ratio(ratio_db);
    let v = 1.0;
    let frames = generate_trace(&cfg, &SubjectProfile::constant_speed(v), 120.0, &ImpairmentConfig::none()).unwrap();
    let w = window_of(&frames, 120.0, 100.0);
    let acf = combine_uniform(compute_acf(&w, 0.5).unwrap());
    let r = 10f64.powf(ratio_db / 10.0);
    let k = cfg.wavenumber();
    let vals = acf.combined_values().unwrap();
    let mse = vals
        .iter()
        .enumerate()
        .map(|(l, &s)| {
            let tau = (l + 1) as f64 * 0.01;
            (s as f64 - r / (r + 1.0) * j0(k * v * tau)).powi(2)
        })
        .sum::<f64>()
        / vals.len() as f64;
    assert!(mse < 0.01, "{mse}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn same_seed_same_trace(seed in any::<u64>(), walking in any::<bool>()) {
        let cfg = ChannelConfig::new(seed).with_sample_rate(100.0).with_subcarriers(8);
        let s = if walking { SubjectProfile::human() } else { SubjectProfile::none() };
        let imp = ImpairmentConfig { packet_loss_rate: 0.05, timing_jitter_std_s: 1e-4, ..ImpairmentConfig::none() };
        let a = generate_trace(&cfg, &s, 2.0, &imp).unwrap();
        let b = generate_trace(&cfg, &s, 2.0, &imp).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn phase_drift_leaves_power_analysis_unchanged(seed in 0u64..1000, drift in -60.0f64..60.0) {
        let cfg = ChannelConfig::new(seed).with_sample_rate(100.0).with_subcarriers(16);
        let clean = generate_trace(&cfg, &SubjectProfile::human(), 6.0, &ImpairmentConfig::none()).unwrap();
        let imp = ImpairmentConfig { phase_drift_rate: drift, ..ImpairmentConfig::none() };
        let drifted = generate_trace(&cfg, &SubjectProfile::human(), 6.0, &imp).unwrap();
        let sensing = SensingConfig::default();
        let a = analyze_window(&window_of(&clean, 6.0, 100.0), &sensing).unwrap();
        let b = analyze_window(&window_of(&drifted, 6.0, 100.0), &sensing).unwrap();
        prop_assert_eq!(a.decision, b.decision);
        prop_assert_eq!(&a.acf_queue, &b.acf_queue);
    }
}
