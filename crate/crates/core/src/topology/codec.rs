use serde::{Deserialize, Serialize};

use crate::foundation::{
    estimate_speed_with, motion_statistic_with, AcfCurve, MotionDecision, SpeedConfig, SpeedTrace, Threshold, Verdict,
    WindowAnalysis,
};
use crate::subject_id::{extract_features, FeatureVector};

use super::TopologyError;

pub const UPLOAD_MAGIC: u16 = 0x5348;
pub const UPLOAD_VERSION: u8 = 1;
pub const FLAG_MOTION: u8 = 0b01;
pub const FLAG_ROWS: u8 = 0b10;

/// Upload header, little endian:
///
/// | bytes | field |
/// |---|---|
/// | 2 | magic `0x5348` |
/// | 1 | version |
/// | 1 | flags (bit 0 motion, bit 1 per-subcarrier rows present) |
/// | 2 | device id |
/// | 2 | lag count `L` |
/// | 2 | curve count `C` |
/// | 2 | subcarrier count `F` (0 without rows) |
/// | 4 | window index |
/// | 4 | frames in the window |
/// | 4 | samples behind each curve |
/// | 4 | window motion statistic, f32 |
/// | 8 | window start, f64 seconds |
/// | 8 | sample interval, f64 seconds |
///
/// followed by `C` curves of `8` (curve end time, f64) `+ 4 L` (combined
/// values, f32) `+ 4 F L` (rows, f32, only with the rows flag) bytes.
pub const UPLOAD_HEADER_BYTES: usize = 44;

/// The ACF queue of one window as shipped to the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadMessage {
    pub device_id: u16,
    pub window_index: u32,
    pub window_start_s: f64,
    pub sample_interval_s: f64,
    pub window_frames: u32,
    pub curve_samples: u32,
    pub motion_flag: bool,
    pub motion_statistic: f32,
    pub lag_count: u16,
    pub curve_times_s: Vec<f64>,
    pub combined: Vec<Vec<f32>>,
    /// `rows[c][f]` is subcarrier `f` of curve `c`.
    pub rows: Option<Vec<Vec<Vec<f32>>>>,
}

impl UploadMessage {
    pub fn from_analysis(device_id: u16, window_index: u64, analysis: &WindowAnalysis, include_rows: bool) -> Self {
        let first = analysis.acf_queue.first();
        let lag_count = first.map_or(0, |c| c.lag_count) as u16;
        let combined: Vec<Vec<f32>> =
            analysis.acf_queue.iter().map(|c| c.combined_values().map(<[f32]>::to_vec).unwrap_or_default()).collect();
        let rows = include_rows.then(|| analysis.acf_queue.iter().map(|c| c.rows.clone()).collect());
        Self {
            device_id,
            window_index: window_index as u32,
            window_start_s: analysis.start_s,
            sample_interval_s: first.map_or(0.0, |c| c.sample_interval_s),
            window_frames: analysis.frames as u32,
            curve_samples: first.and_then(|c| c.sample_count).unwrap_or(0) as u32,
            motion_flag: analysis.decision.is_motion(),
            motion_statistic: analysis.decision.motion_statistic as f32,
            lag_count,
            curve_times_s: analysis.speeds.entries.iter().map(|e| e.time_s).collect(),
            combined,
            rows,
        }
    }

    fn subcarriers(&self) -> usize {
        self.rows.as_ref().and_then(|r| r.first()).map_or(0, Vec::len)
    }

    pub fn payload_bytes(&self) -> usize {
        let l = self.lag_count as usize;
        UPLOAD_HEADER_BYTES + self.combined.len() * (8 + 4 * l + 4 * self.subcarriers() * l)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload_bytes());
        let flags = if self.motion_flag { FLAG_MOTION } else { 0 } | if self.rows.is_some() { FLAG_ROWS } else { 0 };
        out.extend_from_slice(&UPLOAD_MAGIC.to_le_bytes());
        out.push(UPLOAD_VERSION);
        out.push(flags);
        out.extend_from_slice(&self.device_id.to_le_bytes());
        out.extend_from_slice(&self.lag_count.to_le_bytes());
        out.extend_from_slice(&(self.combined.len() as u16).to_le_bytes());
        out.extend_from_slice(&(self.subcarriers() as u16).to_le_bytes());
        out.extend_from_slice(&self.window_index.to_le_bytes());
        out.extend_from_slice(&self.window_frames.to_le_bytes());
        out.extend_from_slice(&self.curve_samples.to_le_bytes());
        out.extend_from_slice(&self.motion_statistic.to_le_bytes());
        out.extend_from_slice(&self.window_start_s.to_le_bytes());
        out.extend_from_slice(&self.sample_interval_s.to_le_bytes());
        for (c, values) in self.combined.iter().enumerate() {
            out.extend_from_slice(&self.curve_times_s[c].to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
            if let Some(rows) = &self.rows {
                for row in &rows[c] {
                    for v in row {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TopologyError> {
        let mut r = Reader { buf, at: 0 };
        if r.u16()? != UPLOAD_MAGIC {
            return Err(TopologyError::Codec("bad magic".into()));
        }
        let version = r.u8()?;
        if version != UPLOAD_VERSION {
            return Err(TopologyError::Codec(format!("unsupported version {version}")));
        }
        let flags = r.u8()?;
        let device_id = r.u16()?;
        let lag_count = r.u16()?;
        let curves = r.u16()? as usize;
        let subcarriers = r.u16()? as usize;
        let window_index = r.u32()?;
        let window_frames = r.u32()?;
        let curve_samples = r.u32()?;
        let motion_statistic = r.f32()?;
        let window_start_s = r.f64()?;
        let sample_interval_s = r.f64()?;
        let with_rows = flags & FLAG_ROWS != 0;
        let mut curve_times_s = Vec::with_capacity(curves);
        let mut combined = Vec::with_capacity(curves);
        let mut rows = Vec::new();
        for _ in 0..curves {
            curve_times_s.push(r.f64()?);
            combined.push((0..lag_count).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?);
            if with_rows {
                let curve_rows = (0..subcarriers)
                    .map(|_| (0..lag_count).map(|_| r.f32()).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()?;
                rows.push(curve_rows);
            }
        }
        if r.at != buf.len() {
            return Err(TopologyError::Codec(format!("{} trailing bytes", buf.len() - r.at)));
        }
        Ok(Self {
            device_id,
            window_index,
            window_start_s,
            sample_interval_s,
            window_frames,
            curve_samples,
            motion_flag: flags & FLAG_MOTION != 0,
            motion_statistic,
            lag_count,
            curve_times_s,
            combined,
            rows: with_rows.then_some(rows),
        })
    }
}

/// Rebuilds the window's features from an upload alone. Matches
/// `features_of` on the sending side bit for bit.
pub fn upload_features(msg: &UploadMessage, wavelength_m: f64, threshold: &Threshold) -> FeatureVector {
    let samples = Some(msg.curve_samples as usize);
    let speed_cfg = SpeedConfig { threshold: *threshold, ..SpeedConfig::default() };
    let mut curves = Vec::with_capacity(msg.combined.len());
    let mut ms = Vec::with_capacity(msg.combined.len());
    let mut entries = Vec::with_capacity(msg.combined.len());
    for (values, &time_s) in msg.combined.iter().zip(&msg.curve_times_s) {
        let wide: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let curve = AcfCurve::from_combined(msg.sample_interval_s, samples, &wide);
        ms.push(motion_statistic_with(&curve, threshold));
        let mut entry = estimate_speed_with(&curve, wavelength_m, &speed_cfg);
        entry.time_s = time_s;
        entries.push(entry);
        curves.push(curve);
    }
    extract_features(&SpeedTrace { entries, ..SpeedTrace::default() }, &curves, &ms)
}

/// What an edge processor concluded about one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WindowSummary {
    Analyzed { start_s: f64, end_s: f64, decision: MotionDecision, speed_mps: Option<f64>, proximity: f64 },
    Rejected { frames: u32, expected: u32 },
}

/// Per-window record from a processor to the master, optionally carrying
/// the upload for the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub device_id: u16,
    pub window_index: u64,
    pub summary: WindowSummary,
    pub upload: Option<UploadMessage>,
}

/// Report header, little endian: device id u16, window index u32, status u8
/// (0 analysed-static, 1 analysed-motion, 2 rejected), has-upload u8, then
/// six 8-byte fields (motion statistic, threshold, speed or NaN, proximity,
/// start, end; for a rejected window frames and expected as u64 followed by
/// four zero fields).
pub const REPORT_HEADER_BYTES: usize = 56;

impl WindowReport {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.device_id.to_le_bytes());
        out.extend_from_slice(&(self.window_index as u32).to_le_bytes());
        let fields: [[u8; 8]; 6] = match self.summary {
            WindowSummary::Analyzed { start_s, end_s, decision, speed_mps, proximity } => {
                out.push(u8::from(decision.verdict == Verdict::Motion));
                [
                    decision.motion_statistic.to_le_bytes(),
                    decision.threshold.to_le_bytes(),
                    speed_mps.unwrap_or(f64::NAN).to_le_bytes(),
                    proximity.to_le_bytes(),
                    start_s.to_le_bytes(),
                    end_s.to_le_bytes(),
                ]
            }
            WindowSummary::Rejected { frames, expected } => {
                out.push(2);
                [(frames as u64).to_le_bytes(), (expected as u64).to_le_bytes(), [0; 8], [0; 8], [0; 8], [0; 8]]
            }
        };
        out.push(u8::from(self.upload.is_some()));
        for f in fields {
            out.extend_from_slice(&f);
        }
        if let Some(u) = &self.upload {
            out.extend_from_slice(&u.encode());
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        REPORT_HEADER_BYTES + self.upload.as_ref().map_or(0, UploadMessage::payload_bytes)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TopologyError> {
        let mut r = Reader { buf, at: 0 };
        let device_id = r.u16()?;
        let window_index = r.u32()? as u64;
        let status = r.u8()?;
        let has_upload = r.u8()? != 0;
        let f: Vec<f64> = (0..6).map(|_| r.f64()).collect::<Result<_, _>>()?;
        let summary = match status {
            0 | 1 => WindowSummary::Analyzed {
                start_s: f[4],
                end_s: f[5],
                decision: MotionDecision {
                    motion_statistic: f[0],
                    threshold: f[1],
                    verdict: if status == 1 { Verdict::Motion } else { Verdict::Static },
                },
                speed_mps: (!f[2].is_nan()).then_some(f[2]),
                proximity: f[3],
            },
            2 => WindowSummary::Rejected { frames: f[0].to_bits() as u32, expected: f[1].to_bits() as u32 },
            other => return Err(TopologyError::Codec(format!("unknown report status {other}"))),
        };
        let upload = if has_upload { Some(UploadMessage::decode(&buf[r.at..])?) } else { None };
        if !has_upload && r.at != buf.len() {
            return Err(TopologyError::Codec("trailing bytes after report".into()));
        }
        Ok(Self { device_id, window_index, summary, upload })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], TopologyError> {
        let end = self.at + N;
        let bytes = self.buf.get(self.at..end).ok_or_else(|| TopologyError::Codec("truncated message".into()))?;
        self.at = end;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, TopologyError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, TopologyError> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, TopologyError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f32, TopologyError> {
        Ok(f32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, TopologyError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_sim::{generate_trace, ChannelConfig, ImpairmentConfig, SubjectProfile};
    use crate::foundation::{analyze_window, PowerWindow, SensingConfig};
    use crate::subject_id::features_of;

    fn walking_window(seed: u64) -> WindowAnalysis {
        let ch = ChannelConfig::new(seed).with_sample_rate(500.0).with_subcarriers(8);
        let frames = generate_trace(&ch, &SubjectProfile::human(), 6.0, &ImpairmentConfig::none()).unwrap();
        let mut w = PowerWindow::new(6.0, 500.0).unwrap();
        for f in &frames {
            w.update(f).unwrap();
        }
        analyze_window(&w, &SensingConfig::default()).unwrap()
    }

    #[test]
    fn header_size_matches_layout() {
        let a = walking_window(1);
        let m = UploadMessage::from_analysis(3, 7, &a, false);
        let bytes = m.encode();
        assert_eq!(bytes.len(), m.payload_bytes());
        let empty = UploadMessage { combined: vec![], curve_times_s: vec![], ..m };
        assert_eq!(empty.encode().len(), UPLOAD_HEADER_BYTES);
    }

    #[test]
    fn upload_round_trips() {
        let a = walking_window(2);
        for rows in [false, true] {
            let m = UploadMessage::from_analysis(9, 4, &a, rows);
            let bytes = m.encode();
            assert_eq!(bytes.len(), m.payload_bytes());
            assert_eq!(UploadMessage::decode(&bytes).unwrap(), m);
        }
        let m = UploadMessage::from_analysis(9, 4, &a, false);
        assert_eq!(m.curve_times_s.len(), 57);
        assert_eq!(m.lag_count, 100);
    }

    #[test]
    fn cloud_features_match_edge_features() {
        let cfg = SensingConfig::default();
        for seed in [3, 4] {
            let a = walking_window(seed);
            assert!(a.decision.is_motion());
            let msg = UploadMessage::decode(&UploadMessage::from_analysis(1, 0, &a, false).encode()).unwrap();
            let cloud = upload_features(&msg, cfg.wavelength_m, &cfg.threshold);
            let edge = features_of(&a);
            assert_eq!(cloud.to_array().map(f64::to_bits), edge.to_array().map(f64::to_bits));
        }
    }

    #[test]
    fn truncated_and_corrupt_messages_are_rejected() {
        let m = UploadMessage::from_analysis(1, 0, &walking_window(5), false);
        let bytes = m.encode();
        assert!(UploadMessage::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(UploadMessage::decode(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(UploadMessage::decode(&long).is_err());
    }

    #[test]
    fn report_round_trips() {
        let a = walking_window(6);
        let summary = WindowSummary::Analyzed {
            start_s: a.start_s,
            end_s: a.end_s,
            decision: a.decision,
            speed_mps: a.median_speed(),
            proximity: 0.25,
        };
        let with = WindowReport {
            device_id: 2,
            window_index: 11,
            summary,
            upload: Some(UploadMessage::from_analysis(2, 11, &a, false)),
        };
        let bytes = with.encode();
        assert_eq!(bytes.len(), with.encoded_len());
        assert_eq!(WindowReport::decode(&bytes).unwrap(), with);
        let rejected =
            WindowReport { device_id: 2, window_index: 12, summary: WindowSummary::Rejected { frames: 10, expected: 3000 }, upload: None };
        assert_eq!(rejected.encode().len(), REPORT_HEADER_BYTES);
        assert_eq!(WindowReport::decode(&rejected.encode()).unwrap(), rejected);
    }
}
