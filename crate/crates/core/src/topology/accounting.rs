use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel_sim::{CsiFrame, BINARY_BYTES_PER_GAIN, BINARY_FRAME_HEADER_BYTES};

use super::UploadMessage;

/// Airtime lost per active device: efficiency is `1 / (1 + 0.05 n)`.
pub const CONTENTION_PER_DEVICE: f64 = 0.05;
/// Fraction of the rate lost at full background traffic load.
pub const CONTENTION_LOAD_DEGRADATION: f64 = 0.25;

pub fn base_efficiency(n_devices: usize) -> f64 {
    1.0 / (1.0 + CONTENTION_PER_DEVICE * n_devices as f64)
}

/// Per-device CSI rate left after channel contention among `n_devices`
/// transmitters and a background `traffic_load` in `[0, 1]`.
pub fn effective_csi_rate(nominal_rate_hz: f64, n_devices: usize, traffic_load: f64) -> f64 {
    let load = traffic_load.clamp(0.0, 1.0);
    nominal_rate_hz.max(0.0) * base_efficiency(n_devices) * (1.0 - CONTENTION_LOAD_DEGRADATION * load)
}

/// Drops frames so that the surviving rate matches `effective_csi_rate`.
/// Deterministic in `seed`.
pub fn apply_contention(
    frames: &[CsiFrame],
    nominal_rate_hz: f64,
    n_devices: usize,
    traffic_load: f64,
    seed: u64,
) -> Vec<CsiFrame> {
    let keep = if nominal_rate_hz > 0.0 {
        (effective_csi_rate(nominal_rate_hz, n_devices, traffic_load) / nominal_rate_hz).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    frames.iter().filter(|_| rng.random::<f64>() < keep).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub devices: usize,
    /// Summed trace duration over devices.
    pub device_seconds: f64,
    /// Bytes to stream every frame in the binary frame encoding.
    pub raw_bytes: u64,
    pub raw_bytes_per_s: f64,
    pub upload_messages: usize,
    pub upload_bytes: u64,
    /// Mean upload size spread over its window; `None` without uploads.
    pub acf_bytes_per_s: Option<f64>,
    /// `100 (1 - acf/raw)` per second of data.
    pub acf_reduction_pct: Option<f64>,
    /// `100 (1 - uploaded/raw)` over the whole run.
    pub event_reduction_pct: f64,
}

impl BandwidthReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        format!(
            "devices,device_seconds,raw_bytes,raw_bytes_per_s,upload_messages,upload_bytes,acf_bytes_per_s,acf_reduction_pct,event_reduction_pct\n{},{},{},{},{},{},{},{},{}\n",
            self.devices,
            self.device_seconds,
            self.raw_bytes,
            self.raw_bytes_per_s,
            self.upload_messages,
            self.upload_bytes,
            opt(self.acf_bytes_per_s),
            opt(self.acf_reduction_pct),
            self.event_reduction_pct,
        )
    }
}

/// Continuous raw streaming versus the uploads actually emitted.
pub fn account_bandwidth(
    traces: &BTreeMap<u16, Vec<CsiFrame>>,
    uploads: &[UploadMessage],
    window_len_s: f64,
) -> BandwidthReport {
    let raw_bytes: u64 = traces.values().flatten().map(|f| f.binary_len() as u64).sum();
    let device_seconds: f64 = traces
        .values()
        .filter(|t| t.len() >= 2)
        .map(|t| {
            let span = t[t.len() - 1].timestamp_s - t[0].timestamp_s;
            span * t.len() as f64 / (t.len() - 1) as f64
        })
        .sum();
    let raw_bytes_per_s = if device_seconds > 0.0 { raw_bytes as f64 / device_seconds } else { 0.0 };
    let upload_bytes: u64 = uploads.iter().map(|u| u.payload_bytes() as u64).sum();
    let acf_bytes_per_s =
        (!uploads.is_empty()).then(|| upload_bytes as f64 / uploads.len() as f64 / window_len_s);
    let acf_reduction_pct = acf_bytes_per_s.filter(|_| raw_bytes_per_s > 0.0).map(|a| 100.0 * (1.0 - a / raw_bytes_per_s));
    let event_reduction_pct = if raw_bytes > 0 { 100.0 * (1.0 - upload_bytes as f64 / raw_bytes as f64) } else { 0.0 };
    BandwidthReport {
        devices: traces.len(),
        device_seconds,
        raw_bytes,
        raw_bytes_per_s,
        upload_messages: uploads.len(),
        upload_bytes,
        acf_bytes_per_s,
        acf_reduction_pct,
        event_reduction_pct,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyProjection {
    pub continuous_raw_bytes: f64,
    pub uploads: f64,
    pub event_driven_bytes: f64,
    pub reduction_pct: f64,
}

/// One device over 24 h: raw streaming at `sample_rate_hz` with
/// `subcarriers` gains per frame, against one `upload_bytes` message per
/// motion window at the given duty cycle.
pub fn project_daily(
    sample_rate_hz: f64,
    subcarriers: usize,
    window_len_s: f64,
    upload_bytes: usize,
    motion_duty: f64,
) -> DailyProjection {
    const DAY_S: f64 = 86_400.0;
    let frame = (BINARY_FRAME_HEADER_BYTES + BINARY_BYTES_PER_GAIN * subcarriers) as f64;
    let continuous_raw_bytes = DAY_S * sample_rate_hz * frame;
    let uploads = (DAY_S / window_len_s * motion_duty.clamp(0.0, 1.0)).round();
    let event_driven_bytes = uploads * upload_bytes as f64;
    DailyProjection {
        continuous_raw_bytes,
        uploads,
        event_driven_bytes,
        reduction_pct: 100.0 * (1.0 - event_driven_bytes / continuous_raw_bytes),
    }
}
