use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Bytes of the fixed binary frame header: timestamp f64, sequence u32,
/// device id u16, subcarrier count u16 (all little endian).
pub const BINARY_FRAME_HEADER_BYTES: usize = 16;
/// One complex gain as a pair of little-endian f32 (real, imaginary).
pub const BINARY_BYTES_PER_GAIN: usize = 8;

/// One timestamped channel snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiFrame {
    pub timestamp_s: f64,
    pub sequence: u32,
    pub device_id: u16,
    pub gains: Vec<Complex64>,
}

impl CsiFrame {
    /// Power response `|H(t,f)|^2` per subcarrier.
    pub fn power(&self) -> impl Iterator<Item = f64> + '_ {
        self.gains.iter().map(|h| h.norm_sqr())
    }

    pub fn subcarrier_count(&self) -> usize {
        self.gains.len()
    }

    pub fn binary_len(&self) -> usize {
        BINARY_FRAME_HEADER_BYTES + BINARY_BYTES_PER_GAIN * self.gains.len()
    }
}

pub fn encode_frame_binary(frame: &CsiFrame, out: &mut Vec<u8>) {
    out.extend_from_slice(&frame.timestamp_s.to_le_bytes());
    out.extend_from_slice(&frame.sequence.to_le_bytes());
    out.extend_from_slice(&frame.device_id.to_le_bytes());
    out.extend_from_slice(&(frame.gains.len() as u16).to_le_bytes());
    for g in &frame.gains {
        out.extend_from_slice(&(g.re as f32).to_le_bytes());
        out.extend_from_slice(&(g.im as f32).to_le_bytes());
    }
}

/// Decodes one frame and returns it with the number of bytes consumed.
/// Gains come back at 32-bit precision.
pub fn decode_frame_binary(buf: &[u8]) -> Result<(CsiFrame, usize), SimError> {
    if buf.len() < BINARY_FRAME_HEADER_BYTES {
        return Err(SimError::MalformedFrame(format!("header needs 16 bytes, have {}", buf.len())));
    }
    let timestamp_s = f64::from_le_bytes(buf[0..8].try_into().unwrap());
    let sequence = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    let device_id = u16::from_le_bytes(buf[12..14].try_into().unwrap());
    let count = u16::from_le_bytes(buf[14..16].try_into().unwrap()) as usize;
    let total = BINARY_FRAME_HEADER_BYTES + count * BINARY_BYTES_PER_GAIN;
    if buf.len() < total {
        return Err(SimError::MalformedFrame(format!("frame needs {total} bytes, have {}", buf.len())));
    }
    let gains = buf[BINARY_FRAME_HEADER_BYTES..total]
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok((CsiFrame { timestamp_s, sequence, device_id, gains }, total))
}

/// Text form: `timestamp_s,sequence,device_id,re0,im0,re1,im1,...`.
/// Floats use the shortest representation that round-trips exactly.
pub fn encode_frame_text(frame: &CsiFrame) -> String {
    let mut line = format!("{},{},{}", frame.timestamp_s, frame.sequence, frame.device_id);
    for g in &frame.gains {
        line.push(',');
        line.push_str(&g.re.to_string());
        line.push(',');
        line.push_str(&g.im.to_string());
    }
    line
}

pub fn decode_frame_text(line: &str) -> Result<CsiFrame, SimError> {
    let mut fields = line.trim().split(',');
    let mut next = |what: &str| {
        fields.next().ok_or_else(|| SimError::MalformedFrame(format!("missing {what}")))
    };
    let timestamp_s: f64 = next("timestamp")?
        .parse()
        .map_err(|e| SimError::MalformedFrame(format!("timestamp: {e}")))?;
    let sequence: u32 = next("sequence")?
        .parse()
        .map_err(|e| SimError::MalformedFrame(format!("sequence: {e}")))?;
    let device_id: u16 = next("device_id")?
        .parse()
        .map_err(|e| SimError::MalformedFrame(format!("device_id: {e}")))?;
    let values: Vec<f64> = fields
        .map(|f| f.parse::<f64>().map_err(|e| SimError::MalformedFrame(format!("gain `{f}`: {e}"))))
        .collect::<Result<_, _>>()?;
    if values.is_empty() || values.len() % 2 != 0 {
        return Err(SimError::MalformedFrame(format!("expected re/im pairs, got {} values", values.len())));
    }
    if !timestamp_s.is_finite() {
        return Err(SimError::MalformedFrame("non-finite timestamp".into()));
    }
    let gains = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    Ok(CsiFrame { timestamp_s, sequence, device_id, gains })
}

pub fn write_trace_text<W: Write>(frames: &[CsiFrame], mut out: W) -> std::io::Result<()> {
    let subcarriers = frames.first().map_or(0, |f| f.gains.len());
    writeln!(out, "# homesense-trace v1 subcarriers={subcarriers}")?;
    for f in frames {
        writeln!(out, "{}", encode_frame_text(f))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceReadReport {
    pub frames: Vec<CsiFrame>,
    /// `(line number, reason)` for every line that failed to parse.
    pub skipped: Vec<(usize, String)>,
}

/// Reads a text trace, skipping (and reporting) lines that fail to parse or
/// whose subcarrier count disagrees with the first good frame.
pub fn read_trace_text<R: BufRead>(input: R) -> std::io::Result<TraceReadReport> {
    let mut report = TraceReadReport::default();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match decode_frame_text(trimmed) {
            Ok(frame) => {
                if let Some(first) = report.frames.first() {
                    if first.gains.len() != frame.gains.len() {
                        report.skipped.push((idx + 1, format!("expected {} subcarriers", first.gains.len())));
                        continue;
                    }
                }
                report.frames.push(frame);
            }
            Err(e) => report.skipped.push((idx + 1, e.to_string())),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(gains: Vec<(f64, f64)>) -> CsiFrame {
        CsiFrame {
            timestamp_s: 1.25,
            sequence: 7,
            device_id: 3,
            gains: gains.into_iter().map(|(r, i)| Complex64::new(r, i)).collect(),
        }
    }

    #[test]
    fn binary_layout_is_16_plus_8_per_gain() {
        let f = frame(vec![(1.0, 2.0); 56]);
        let mut buf = Vec::new();
        encode_frame_binary(&f, &mut buf);
        assert_eq!(buf.len(), 16 + 8 * 56);
        assert_eq!(buf.len(), f.binary_len());
    }

    #[test]
    fn corrupted_lines_are_skipped_and_counted() {
        let good = encode_frame_text(&frame(vec![(1.0, 0.5), (2.0, -1.0)]));
        let text = format!("# header\n{good}\nnot,a,frame\n{good}\n1.0,2,3,4.0\n");
        let report = read_trace_text(text.as_bytes()).unwrap();
        assert_eq!(report.frames.len(), 2);
        assert_eq!(report.skipped.len(), 2);
        assert_eq!(report.skipped[0].0, 3);
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(ts in -1e6f64..1e6, seq: u32, dev: u16,
                                    gains in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..20)) {
            let f = CsiFrame { timestamp_s: ts, sequence: seq, device_id: dev,
                               gains: gains.iter().map(|&(r, i)| Complex64::new(r, i)).collect() };
            prop_assert_eq!(decode_frame_text(&encode_frame_text(&f)).unwrap(), f);
        }

        #[test]
        fn binary_round_trip_at_f32_precision(gains in prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3), 1..20)) {
            let f = CsiFrame { timestamp_s: 0.5, sequence: 9, device_id: 1,
                               gains: gains.iter().map(|&(r, i)| Complex64::new(r as f64, i as f64)).collect() };
            let mut buf = Vec::new();
            encode_frame_binary(&f, &mut buf);
            let (back, used) = decode_frame_binary(&buf).unwrap();
            prop_assert_eq!(used, buf.len());
            prop_assert_eq!(back, f);
        }
    }
}
