use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, rng_stream, speed_waveform, ChannelConfig, CsiFrame, ImpairmentConfig, SimError, SubjectKind,
    SubjectProfile, STREAM_JITTER, STREAM_LOSS, STREAM_NOISE, STREAM_PHASE, STREAM_SCATTERERS,
};

/// One moving subject inside a segment; `gain_db` scales its motion energy
/// relative to the link's configured ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub subject: SubjectProfile,
    #[serde(default)]
    pub gain_db: f64,
}

impl MixtureComponent {
    pub fn new(subject: SubjectProfile) -> Self {
        Self { subject, gain_db: 0.0 }
    }

    pub fn with_gain_db(mut self, gain_db: f64) -> Self {
        self.gain_db = gain_db;
        self
    }
}

/// A stretch of time during which the set of moving subjects is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_s: f64,
    pub components: Vec<MixtureComponent>,
}

impl Segment {
    pub fn single(duration_s: f64, subject: SubjectProfile) -> Self {
        Self { duration_s, components: vec![MixtureComponent::new(subject)] }
    }

    pub fn still(duration_s: f64) -> Self {
        Self { duration_s, components: Vec::new() }
    }
}

pub fn generate_trace(
    cfg: &ChannelConfig,
    subject: &SubjectProfile,
    duration_s: f64,
    impair: &ImpairmentConfig,
) -> Result<Vec<CsiFrame>, SimError> {
    generate_schedule(cfg, &[Segment::single(duration_s, subject.clone())], impair)
}

pub fn generate_mixture(
    cfg: &ChannelConfig,
    components: &[MixtureComponent],
    duration_s: f64,
    impair: &ImpairmentConfig,
) -> Result<Vec<CsiFrame>, SimError> {
    generate_schedule(cfg, &[Segment { duration_s, components: components.to_vec() }], impair)
}

/// Generates a continuous trace that walks through `segments` in order.
pub fn generate_schedule(
    cfg: &ChannelConfig,
    segments: &[Segment],
    impair: &ImpairmentConfig,
) -> Result<Vec<CsiFrame>, SimError> {
    cfg.validate()?;
    impair.validate()?;
    let mut powers: Vec<Vec<f64>> = Vec::new();
    for (seg_idx, seg) in segments.iter().enumerate() {
        if !(seg.duration_s.is_finite() && seg.duration_s > 0.0) {
            return Err(SimError::InvalidDuration(seg.duration_s));
        }
        let n = frame_count(seg.duration_s, cfg.sample_rate_hz);
        let noise_seed = derive_seed(cfg.rng_seed, seg_idx as u64);
        let mut block = static_power(cfg, n, noise_seed);
        for (comp_idx, comp) in seg.components.iter().enumerate() {
            comp.subject.validate()?;
            if !comp.gain_db.is_finite() {
                return Err(SimError::InvalidConfig { field: "gain_db", reason: "must be finite".into() });
            }
            if comp.subject.kind == SubjectKind::None {
                continue;
            }
            let seed = derive_seed(cfg.rng_seed, (seg_idx as u64) * 64 + comp_idx as u64);
            add_dynamic_power(cfg, comp, seg.duration_s, n, seed, &mut block)?;
        }
        powers.extend(block);
    }
    Ok(finish(cfg, powers, impair))
}

fn frame_count(duration_s: f64, rate_hz: f64) -> usize {
    let x = duration_s * rate_hz;
    if (x - x.round()).abs() < 1e-9 {
        x.round() as usize
    } else {
        x.ceil() as usize
    }
}

fn static_power(cfg: &ChannelConfig, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_stream(seed, STREAM_NOISE);
    let sigma = cfg.noise_variance.sqrt();
    (0..n)
        .map(|_| {
            (0..cfg.subcarrier_count)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    cfg.static_mean + sigma * z
                })
                .collect()
        })
        .collect()
}

/// Adds `E_d(f) * d(t,f)` where `d` is a unit-variance sum of `N` scatterers
/// with uniform arrival angles, Doppler-shifted by the subject's displacement.
/// Averaged over angles its autocorrelation is `J0(k v tau)`.
fn add_dynamic_power(
    cfg: &ChannelConfig,
    comp: &MixtureComponent,
    duration_s: f64,
    n: usize,
    seed: u64,
    block: &mut [Vec<f64>],
) -> Result<(), SimError> {
    let paths = cfg.path_count;
    let subcarriers = cfg.subcarrier_count;
    let mut rng = rng_stream(seed, STREAM_SCATTERERS);
    let cos_angle: Vec<f64> = (0..paths).map(|_| rng.random_range(0.0..2.0 * PI).cos()).collect();
    let common: Vec<Complex64> = (0..paths).map(|_| Complex64::cis(rng.random_range(0.0..2.0 * PI))).collect();
    // [f][p] so the per-subcarrier dot product walks memory linearly
    let offsets: Vec<Complex64> =
        (0..subcarriers * paths).map(|_| Complex64::cis(rng.random_range(0.0..2.0 * PI))).collect();

    let speeds = speed_waveform(&comp.subject, duration_s, cfg.sample_rate_hz, seed)?;
    let dt = cfg.sample_interval_s();
    let k = cfg.wavenumber();
    let norm = (2.0 / paths as f64).sqrt();
    let shared = cfg.subcarrier_coherence.sqrt();
    let own = (1.0 - cfg.subcarrier_coherence).sqrt();
    let gain = 10f64.powf(comp.gain_db / 10.0);
    let amplitude: Vec<f64> = cfg
        .motion_energy_ratio_db
        .iter()
        .map(|db| (cfg.noise_variance * 10f64.powf(db / 10.0) * gain).sqrt())
        .collect();

    let mut displacement = 0.0;
    let mut phasor = vec![Complex64::new(0.0, 0.0); paths];
    for (t, row) in block.iter_mut().enumerate().take(n) {
        if t > 0 {
            displacement += 0.5 * (speeds[t - 1].1 + speeds[t.min(speeds.len() - 1)].1) * dt;
        }
        for (ph, c) in phasor.iter_mut().zip(&cos_angle) {
            *ph = Complex64::cis(k * displacement * c);
        }
        let common_term: f64 = phasor.iter().zip(&common).map(|(a, b)| a.re * b.re - a.im * b.im).sum::<f64>() * norm;
        for (f, g) in row.iter_mut().enumerate() {
            let offs = &offsets[f * paths..(f + 1) * paths];
            let own_term: f64 = phasor.iter().zip(offs).map(|(a, b)| a.re * b.re - a.im * b.im).sum::<f64>() * norm;
            *g += amplitude[f] * (shared * common_term + own * own_term);
        }
    }
    Ok(())
}

fn finish(cfg: &ChannelConfig, powers: Vec<Vec<f64>>, impair: &ImpairmentConfig) -> Vec<CsiFrame> {
    let mut phase_rng = rng_stream(cfg.rng_seed, STREAM_PHASE);
    let base_phase: Vec<f64> = (0..cfg.subcarrier_count).map(|_| phase_rng.random_range(0.0..2.0 * PI)).collect();
    let mut loss_rng = rng_stream(cfg.rng_seed, STREAM_LOSS);
    let mut jitter_rng = rng_stream(cfg.rng_seed, STREAM_JITTER);
    let dt = cfg.sample_interval_s();

    let mut frames = Vec::with_capacity(powers.len());
    let mut last_ts = f64::NEG_INFINITY;
    for (i, row) in powers.into_iter().enumerate() {
        let dropped = loss_rng.random::<f64>() < impair.packet_loss_rate;
        let z: f64 = StandardNormal.sample(&mut jitter_rng);
        if dropped {
            continue;
        }
        let nominal = i as f64 * dt;
        let timestamp_s = (nominal + impair.timing_jitter_std_s * z).max(last_ts);
        last_ts = timestamp_s;
        let drift = impair.phase_drift_rate * nominal;
        let gains = row
            .iter()
            .zip(&base_phase)
            .map(|(&g, &phase)| {
                let mut amp = g.max(0.0).sqrt();
                if let Some(clip) = impair.amplitude_clip {
                    amp = amp.min(clip);
                }
                Complex64::from_polar(amp, phase + drift)
            })
            .collect();
        frames.push(CsiFrame { timestamp_s, sequence: i as u32, device_id: cfg.device_id, gains });
    }
    frames
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag1(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        cov / var
    }

    #[test]
    fn frame_count_is_ceiling() {
        let cfg = ChannelConfig::new(1);
        let frames = generate_trace(&cfg, &SubjectProfile::none(), 1.005, &ImpairmentConfig::none()).unwrap();
        assert_eq!(frames.len(), 101);
        let frames = generate_trace(&cfg, &SubjectProfile::none(), 2.0, &ImpairmentConfig::none()).unwrap();
        assert_eq!(frames.len(), 200);
        assert!(frames.windows(2).all(|w| w[1].sequence == w[0].sequence + 1));
    }

    #[test]
    fn static_power_is_white_gaussian() {
        let cfg = ChannelConfig::new(5);
        let frames = generate_trace(&cfg, &SubjectProfile::none(), 60.0, &ImpairmentConfig::none()).unwrap();
        let n = frames.len();
        let bound = 3.0 / (n as f64).sqrt();
        let mut outside = 0;
        for f in 0..cfg.subcarrier_count {
            let p: Vec<f64> = frames.iter().map(|fr| fr.gains[f].norm_sqr()).collect();
            let mean = p.iter().sum::<f64>() / n as f64;
            let var = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((mean - cfg.static_mean).abs() < 5.0 * (cfg.noise_variance / n as f64).sqrt());
            assert!((var / cfg.noise_variance - 1.0).abs() < 0.1);
            if lag1(&p).abs() > bound {
                outside += 1;
            }
        }
        // 3-sigma band: expect ~0.3% outside
        assert!(outside <= 2, "{outside} subcarriers outside +-3/sqrt(n)");
    }

    #[test]
    fn packet_loss_leaves_sequence_gaps() {
        let cfg = ChannelConfig::new(8);
        let frames = generate_trace(&cfg, &SubjectProfile::none(), 10.0, &ImpairmentConfig::with_loss(0.3)).unwrap();
        assert!((frames.len() as i64 - 700).abs() < 60, "kept {}", frames.len());
        let gaps: u32 = frames.windows(2).map(|w| w[1].sequence - w[0].sequence - 1).sum();
        let leading = frames[0].sequence;
        let trailing = 999 - frames.last().unwrap().sequence;
        assert_eq!(gaps + leading + trailing + frames.len() as u32, 1000);
    }

    #[test]
    fn loss_does_not_perturb_surviving_frames() {
        let cfg = ChannelConfig::new(8);
        let clean = generate_trace(&cfg, &SubjectProfile::human(), 3.0, &ImpairmentConfig::none()).unwrap();
        let lossy = generate_trace(&cfg, &SubjectProfile::human(), 3.0, &ImpairmentConfig::with_loss(0.2)).unwrap();
        for f in &lossy {
            assert_eq!(&clean[f.sequence as usize], f);
        }
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        let cfg = ChannelConfig::new(21);
        let imp = ImpairmentConfig { packet_loss_rate: 0.05, timing_jitter_std_s: 1e-4, phase_drift_rate: 3.0, amplitude_clip: None };
        let a = generate_trace(&cfg, &SubjectProfile::pet(), 4.0, &imp).unwrap();
        let b = generate_trace(&cfg, &SubjectProfile::pet(), 4.0, &imp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jittered_timestamps_stay_monotone() {
        let cfg = ChannelConfig::new(2);
        let imp = ImpairmentConfig { timing_jitter_std_s: 0.02, ..ImpairmentConfig::none() };
        let frames = generate_trace(&cfg, &SubjectProfile::none(), 5.0, &imp).unwrap();
        assert!(frames.windows(2).all(|w| w[1].timestamp_s >= w[0].timestamp_s));
    }

    #[test]
    fn clipping_bounds_amplitude() {
        let cfg = ChannelConfig::new(2);
        let imp = ImpairmentConfig { amplitude_clip: Some(10.0), ..ImpairmentConfig::none() };
        let frames = generate_trace(&cfg, &SubjectProfile::human(), 2.0, &imp).unwrap();
        assert!(frames.iter().flat_map(|f| &f.gains).all(|g| g.norm() <= 10.0 + 1e-12));
    }

    #[test]
    fn rejects_bad_duration() {
        let cfg = ChannelConfig::new(2);
        assert_eq!(
            generate_trace(&cfg, &SubjectProfile::none(), 0.0, &ImpairmentConfig::none()),
            Err(SimError::InvalidDuration(0.0))
        );
        assert!(generate_trace(&cfg, &SubjectProfile::none(), f64::NAN, &ImpairmentConfig::none()).is_err());
    }
}
