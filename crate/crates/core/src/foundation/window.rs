use std::collections::VecDeque;

use crate::channel_sim::CsiFrame;

use super::SensingError;

/// Streaming mean/variance with support for removing the oldest sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Reverses a previous `push(x)`.
    pub fn pop(&mut self, x: f64) {
        match self.count {
            0 => {}
            1 => *self = Self::default(),
            _ => {
                let old_mean = self.mean;
                self.count -= 1;
                self.mean = (old_mean * (self.count + 1) as f64 - x) / self.count as f64;
                self.m2 -= (x - old_mean) * (x - self.mean);
                if self.m2 < 0.0 {
                    self.m2 = 0.0;
                }
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (divide by n).
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn from_slice(xs: impl IntoIterator<Item = f64>) -> Self {
        let mut s = Self::default();
        for x in xs {
            s.push(x);
        }
        s
    }
}

/// Rolling buffer of the last `window_len_s` seconds of power responses.
#[derive(Debug, Clone)]
pub struct PowerWindow {
    window_len_s: f64,
    sample_interval_s: f64,
    capacity: usize,
    timestamps: VecDeque<f64>,
    sequences: VecDeque<u32>,
    power: Vec<VecDeque<f64>>,
    stats: Vec<RunningStats>,
    rejected: usize,
    since_resync: usize,
}

impl PowerWindow {
    pub fn new(window_len_s: f64, sample_rate_hz: f64) -> Result<Self, SensingError> {
        if !(window_len_s.is_finite() && window_len_s > 0.0) {
            return Err(SensingError::InvalidConfig(format!("window length {window_len_s}")));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SensingError::InvalidConfig(format!("sample rate {sample_rate_hz}")));
        }
        let capacity = (window_len_s * sample_rate_hz).round().max(1.0) as usize;
        Ok(Self {
            window_len_s,
            sample_interval_s: 1.0 / sample_rate_hz,
            capacity,
            timestamps: VecDeque::with_capacity(capacity + 1),
            sequences: VecDeque::with_capacity(capacity + 1),
            power: Vec::new(),
            stats: Vec::new(),
            rejected: 0,
            since_resync: 0,
        })
    }

    /// Appends one frame, evicting samples older than the window or beyond
    /// its capacity. Frames with non-finite gains are dropped and counted.
    pub fn update(&mut self, frame: &CsiFrame) -> Result<(), SensingError> {
        if frame.gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) || !frame.timestamp_s.is_finite() {
            self.rejected += 1;
            return Err(SensingError::NonFiniteFrame { sequence: frame.sequence });
        }
        if let Some(&last) = self.timestamps.back() {
            if frame.timestamp_s < last {
                return Err(SensingError::OutOfOrder { previous: last, got: frame.timestamp_s });
            }
        }
        if self.power.is_empty() {
            self.power = vec![VecDeque::with_capacity(self.capacity + 1); frame.gains.len()];
            self.stats = vec![RunningStats::default(); frame.gains.len()];
        } else if frame.gains.len() != self.power.len() {
            self.rejected += 1;
            return Err(SensingError::SubcarrierMismatch { expected: self.power.len(), got: frame.gains.len() });
        }
        for ((buf, stats), p) in self.power.iter_mut().zip(&mut self.stats).zip(frame.power()) {
            buf.push_back(p);
            stats.push(p);
        }
        self.timestamps.push_back(frame.timestamp_s);
        self.sequences.push_back(frame.sequence);

        let horizon = frame.timestamp_s - self.window_len_s;
        while self.timestamps.len() > self.capacity || self.timestamps.front().is_some_and(|&t| t <= horizon - 1e-9) {
            self.timestamps.pop_front();
            self.sequences.pop_front();
            for (buf, stats) in self.power.iter_mut().zip(&mut self.stats) {
                if let Some(old) = buf.pop_front() {
                    stats.pop(old);
                }
            }
        }
        self.since_resync += 1;
        if self.since_resync >= self.capacity {
            self.resync();
        }
        Ok(())
    }

    /// Recomputes the running statistics from the buffered samples to bound
    /// accumulated rounding from add/remove updates.
    fn resync(&mut self) {
        for (buf, stats) in self.power.iter().zip(&mut self.stats) {
            *stats = RunningStats::from_slice(buf.iter().copied());
        }
        self.since_resync = 0;
    }

    pub fn clear(&mut self) {
        self.timestamps.clear();
        self.sequences.clear();
        for buf in &mut self.power {
            buf.clear();
        }
        for s in &mut self.stats {
            *s = RunningStats::default();
        }
        self.since_resync = 0;
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.capacity
    }

    pub fn window_len_s(&self) -> f64 {
        self.window_len_s
    }

    pub fn sample_interval_s(&self) -> f64 {
        self.sample_interval_s
    }

    pub fn subcarrier_count(&self) -> usize {
        self.power.len()
    }

    pub fn rejected_frames(&self) -> usize {
        self.rejected
    }

    pub fn timestamps(&self) -> &VecDeque<f64> {
        &self.timestamps
    }

    pub fn sequences(&self) -> &VecDeque<u32> {
        &self.sequences
    }

    pub fn mean(&self, subcarrier: usize) -> f64 {
        self.stats[subcarrier].mean()
    }

    pub fn variance(&self, subcarrier: usize) -> f64 {
        self.stats[subcarrier].variance()
    }

    /// Contiguous copies of every subcarrier's power sequence (oldest first).
    pub fn series(&self) -> Vec<Vec<f64>> {
        self.power.iter().map(|b| b.iter().copied().collect()).collect()
    }

    /// The trailing `len` samples of every subcarrier.
    pub fn recent_series(&self, len: usize) -> Vec<Vec<f64>> {
        let skip = self.len().saturating_sub(len);
        self.power.iter().map(|b| b.iter().skip(skip).copied().collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn frame(t: f64, seq: u32, powers: &[f64]) -> CsiFrame {
        CsiFrame {
            timestamp_s: t,
            sequence: seq,
            device_id: 0,
            gains: powers.iter().map(|p| Complex64::new(p.sqrt(), 0.0)).collect(),
        }
    }

    #[test]
    fn single_frame_sets_mean_and_zero_variance() {
        let mut w = PowerWindow::new(6.0, 100.0).unwrap();
        let g = [Complex64::new(3.0, 4.0), Complex64::new(1.0, -2.0)];
        w.update(&CsiFrame { timestamp_s: 0.0, sequence: 0, device_id: 1, gains: g.to_vec() }).unwrap();
        assert_eq!(w.mean(0), 25.0);
        assert!((w.mean(1) - 5.0).abs() < 1e-12);
        assert_eq!(w.variance(0), 0.0);
    }

    #[test]
    fn constant_power_has_zero_variance() {
        let mut w = PowerWindow::new(6.0, 100.0).unwrap();
        for i in 0..1000 {
            w.update(&frame(i as f64 * 0.01, i, &[7.0, 9.0])).unwrap();
        }
        assert!(w.variance(0).abs() < 1e-12);
        assert!(w.variance(1).abs() < 1e-12);
    }

    #[test]
    fn capacity_is_t_times_rate() {
        let mut w = PowerWindow::new(6.0, 100.0).unwrap();
        for i in 0..600 {
            w.update(&frame(i as f64 * 0.01, i, &[1.0])).unwrap();
        }
        assert_eq!(w.len(), 600);
        w.update(&frame(6.0, 600, &[1.0])).unwrap();
        assert_eq!(w.len(), 600);
        assert_eq!(*w.sequences().front().unwrap(), 1);
    }

    #[test]
    fn time_horizon_evicts_across_gaps() {
        let mut w = PowerWindow::new(1.0, 100.0).unwrap();
        for i in 0..50 {
            w.update(&frame(i as f64 * 0.01, i, &[1.0])).unwrap();
        }
        w.update(&frame(10.0, 1000, &[1.0])).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn rejects_non_finite_and_out_of_order() {
        let mut w = PowerWindow::new(1.0, 100.0).unwrap();
        w.update(&frame(1.0, 0, &[1.0])).unwrap();
        let bad = CsiFrame { timestamp_s: 1.1, sequence: 1, device_id: 0, gains: vec![Complex64::new(f64::NAN, 0.0)] };
        assert!(matches!(w.update(&bad), Err(SensingError::NonFiniteFrame { sequence: 1 })));
        assert_eq!(w.rejected_frames(), 1);
        assert!(matches!(w.update(&frame(0.5, 2, &[1.0])), Err(SensingError::OutOfOrder { .. })));
        assert_eq!(w.len(), 1);
    }

    proptest! {
        #[test]
        fn streaming_matches_batch(values in prop::collection::vec(0.0f64..500.0, 1..400), cap in 5usize..60) {
            let mut w = PowerWindow::new(cap as f64 / 10.0, 10.0).unwrap();
            for (i, v) in values.iter().enumerate() {
                w.update(&frame(i as f64 * 0.1, i as u32, &[*v])).unwrap();
            }
            let kept = &values[values.len().saturating_sub(w.capacity())..];
            let n = kept.len() as f64;
            let mean = kept.iter().sum::<f64>() / n;
            let var = kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((w.mean(0) - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            prop_assert!((w.variance(0) - var).abs() <= 1e-9 * var.max(mean * mean * 1e-3).max(1e-9));
        }
    }
}
