use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng_stream, SimError, STREAM_RATIO_SPREAD};

/// 5.8 GHz band carrier wavelength in metres.
pub const DEFAULT_WAVELENGTH_M: f64 = 0.0517;
pub const DEFAULT_SUBCARRIERS: usize = 56;
pub const DEFAULT_PATHS: usize = 100;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;
pub const DEFAULT_PATH_LOSS_EXPONENT: f64 = 2.5;
/// Motion-to-noise energy ratio at the 1 m reference distance.
pub const DEFAULT_RATIO_CENTER_DB: f64 = 12.0;
/// Half-width of the per-subcarrier ratio spread (uniform in dB).
pub const DEFAULT_RATIO_SPREAD_DB: f64 = 6.0;

/// Statistical channel description for one transmitter/receiver link.
///
/// Per subcarrier `f` the power response is modelled as
/// `G(t,f) = mu + E_d(f) * d(t,f) + sigma * n(t,f)` where `d` is a
/// unit-variance sum-of-scatterers process and `n` is white Gaussian noise.
/// `motion_energy_ratio_db[f]` is `10 log10(E_d^2(f) / sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub carrier_wavelength_m: f64,
    pub subcarrier_count: usize,
    pub path_count: usize,
    pub motion_energy_ratio_db: Vec<f64>,
    pub noise_variance: f64,
    pub static_mean: f64,
    pub sample_rate_hz: f64,
    /// Fraction of the dynamic energy shared by all subcarriers, in `[0, 1]`.
    /// Near-field motion perturbs subcarriers coherently; far motion does not.
    pub subcarrier_coherence: f64,
    pub path_loss_exponent: f64,
    pub device_id: u16,
    pub rng_seed: u64,
}

impl ChannelConfig {
    /// Default link: 5.8 GHz, 56 subcarriers, 100 paths, 100 Hz and a
    /// log-uniform ±6 dB ratio spread drawn from `seed`.
    pub fn new(seed: u64) -> Self {
        let mut cfg = Self {
            carrier_wavelength_m: DEFAULT_WAVELENGTH_M,
            subcarrier_count: DEFAULT_SUBCARRIERS,
            path_count: DEFAULT_PATHS,
            motion_energy_ratio_db: Vec::new(),
            noise_variance: 1.0,
            static_mean: 100.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            subcarrier_coherence: 0.1,
            path_loss_exponent: DEFAULT_PATH_LOSS_EXPONENT,
            device_id: 0,
            rng_seed: seed,
        };
        cfg.spread_ratio(DEFAULT_RATIO_CENTER_DB, DEFAULT_RATIO_SPREAD_DB);
        cfg
    }

    /// Redraws the per-subcarrier ratios uniformly in
    /// `[center_db - spread_db, center_db + spread_db]` (log-uniform in linear
    /// energy), deterministically from the config seed.
    pub fn spread_ratio(&mut self, center_db: f64, spread_db: f64) -> &mut Self {
        let mut rng = rng_stream(self.rng_seed, STREAM_RATIO_SPREAD);
        self.motion_energy_ratio_db = (0..self.subcarrier_count)
            .map(|_| {
                if spread_db > 0.0 {
                    center_db + rng.random_range(-spread_db..=spread_db)
                } else {
                    center_db
                }
            })
            .collect();
        self
    }

    /// Sets every subcarrier to the same ratio.
    pub fn uniform_ratio(&mut self, ratio_db: f64) -> &mut Self {
        self.motion_energy_ratio_db = vec![ratio_db; self.subcarrier_count];
        self
    }

    pub fn with_subcarriers(mut self, count: usize) -> Self {
        let center = self.mean_ratio_db();
        self.subcarrier_count = count;
        self.spread_ratio(center, DEFAULT_RATIO_SPREAD_DB);
        self
    }

    pub fn with_sample_rate(mut self, rate_hz: f64) -> Self {
        self.sample_rate_hz = rate_hz;
        self
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.path_count = paths;
        self
    }

    pub fn with_device(mut self, device_id: u16) -> Self {
        self.device_id = device_id;
        self
    }

    pub fn with_coherence(mut self, coherence: f64) -> Self {
        self.subcarrier_coherence = coherence;
        self
    }

    pub fn mean_ratio_db(&self) -> f64 {
        if self.motion_energy_ratio_db.is_empty() {
            return DEFAULT_RATIO_CENTER_DB;
        }
        self.motion_energy_ratio_db.iter().sum::<f64>() / self.motion_energy_ratio_db.len() as f64
    }

    /// Wavenumber `k = 2 pi / lambda`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.carrier_wavelength_m
    }

    pub fn sample_interval_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    /// Theoretical lag correlation scale `E_d^2 / (E_d^2 + sigma^2)` per subcarrier.
    pub fn correlation_scale(&self) -> Vec<f64> {
        self.motion_energy_ratio_db
            .iter()
            .map(|db| {
                let r = 10f64.powf(db / 10.0);
                r / (1.0 + r)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::InvalidConfig { field: name, reason: format!("must be finite and > 0, got {v}") })
            }
        };
        positive("carrier_wavelength_m", self.carrier_wavelength_m)?;
        positive("noise_variance", self.noise_variance)?;
        positive("static_mean", self.static_mean)?;
        positive("sample_rate_hz", self.sample_rate_hz)?;
        if !self.path_loss_exponent.is_finite() || self.path_loss_exponent < 0.0 {
            return Err(SimError::InvalidConfig {
                field: "path_loss_exponent",
                reason: format!("must be finite and >= 0, got {}", self.path_loss_exponent),
            });
        }
        if self.subcarrier_count == 0 {
            return Err(SimError::InvalidConfig { field: "subcarrier_count", reason: "must be >= 1".into() });
        }
        if self.subcarrier_count > u16::MAX as usize {
            return Err(SimError::InvalidConfig { field: "subcarrier_count", reason: "must fit in 16 bits".into() });
        }
        if self.path_count == 0 {
            return Err(SimError::InvalidConfig { field: "path_count", reason: "must be >= 1".into() });
        }
        if self.motion_energy_ratio_db.len() != self.subcarrier_count {
            return Err(SimError::InvalidConfig {
                field: "motion_energy_ratio_db",
                reason: format!(
                    "expected {} entries, got {}",
                    self.subcarrier_count,
                    self.motion_energy_ratio_db.len()
                ),
            });
        }
        if let Some(bad) = self.motion_energy_ratio_db.iter().find(|v| !v.is_finite()) {
            return Err(SimError::InvalidConfig { field: "motion_energy_ratio_db", reason: format!("non-finite entry {bad}") });
        }
        if !(0.0..=1.0).contains(&self.subcarrier_coherence) {
            return Err(SimError::InvalidConfig {
                field: "subcarrier_coherence",
                reason: format!("must lie in [0, 1], got {}", self.subcarrier_coherence),
            });
        }
        Ok(())
    }
}

/// Log-distance path loss applied to the motion energy ratio, relative to a
/// 1 m reference.
pub fn attenuate_for_distance(cfg: &ChannelConfig, distance_m: f64) -> Result<ChannelConfig, SimError> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(SimError::InvalidDistance(distance_m));
    }
    let loss_db = 10.0 * cfg.path_loss_exponent * distance_m.log10();
    let mut out = cfg.clone();
    for r in &mut out.motion_energy_ratio_db {
        *r -= loss_db;
    }
    Ok(out)
}

/// Link impairments, applied in the order loss, jitter, phase drift, clipping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpairmentConfig {
    pub packet_loss_rate: f64,
    pub timing_jitter_std_s: f64,
    /// Common phase rotation rate in rad/s (stands in for CFO/SFO).
    pub phase_drift_rate: f64,
    pub amplitude_clip: Option<f64>,
}

impl ImpairmentConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_loss(rate: f64) -> Self {
        Self { packet_loss_rate: rate, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.packet_loss_rate) {
            return Err(SimError::InvalidConfig {
                field: "packet_loss_rate",
                reason: format!("must lie in [0, 1], got {}", self.packet_loss_rate),
            });
        }
        if !(self.timing_jitter_std_s.is_finite() && self.timing_jitter_std_s >= 0.0) {
            return Err(SimError::InvalidConfig {
                field: "timing_jitter_std_s",
                reason: format!("must be finite and >= 0, got {}", self.timing_jitter_std_s),
            });
        }
        if !self.phase_drift_rate.is_finite() {
            return Err(SimError::InvalidConfig { field: "phase_drift_rate", reason: "must be finite".into() });
        }
        if let Some(clip) = self.amplitude_clip {
            if !(clip.is_finite() && clip > 0.0) {
                return Err(SimError::InvalidConfig {
                    field: "amplitude_clip",
                    reason: format!("must be finite and > 0, got {clip}"),
                });
            }
        }
        Ok(())
    }
}
