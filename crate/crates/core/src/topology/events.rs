use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::foundation::{MotionDecision, Verdict};
use crate::subject_id::Label;

use super::TopologyError;

/// Cloud-side result attached to a motion window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    pub margin: f64,
    /// Zone confidence after this window's vote, 0-99.
    pub confidence: u8,
    pub alert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    /// End of the window on the trace clock.
    pub time_s: f64,
    pub window_index: u64,
    pub device_id: u16,
    pub zone: u16,
    pub verdict: Verdict,
    pub motion_statistic: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub speed_mps: Option<f64>,
    pub proximity: f64,
    pub near: bool,
    /// Absent when the window was not classified (static, or edge-only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classification: Option<Classification>,
}

/// Append-only event store; events of one device must arrive in time order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionLog {
    events: Vec<DetectionEvent>,
    last_time: BTreeMap<u16, f64>,
}

impl DetectionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, event: DetectionEvent) -> Result<(), TopologyError> {
        if let Some(&previous_s) = self.last_time.get(&event.device_id) {
            if event.time_s < previous_s {
                return Err(TopologyError::NonMonotone { device: event.device_id, time_s: event.time_s, previous_s });
            }
        }
        self.last_time.insert(event.device_id, event.time_s);
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[DetectionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn alerts(&self) -> impl Iterator<Item = &DetectionEvent> {
        self.events.iter().filter(|e| e.classification.is_some_and(|c| c.alert))
    }

    /// Per-device `(window index, decision)` pairs, for coverage fusion.
    pub fn decisions(&self) -> BTreeMap<u16, Vec<(u64, MotionDecision)>> {
        let mut out: BTreeMap<u16, Vec<(u64, MotionDecision)>> = BTreeMap::new();
        for e in &self.events {
            let d = MotionDecision { motion_statistic: e.motion_statistic, threshold: e.threshold, verdict: e.verdict };
            out.entry(e.device_id).or_default().push((e.window_index, d));
        }
        out
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serialises"));
            out.push('\n');
        }
        out
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_ndjson().as_bytes())
    }

    pub fn from_ndjson(text: &str) -> Result<Self, TopologyError> {
        let mut log = Self::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: DetectionEvent = serde_json::from_str(line)
                .map_err(|err| TopologyError::Codec(format!("event line {}: {err}", i + 1)))?;
            log.append(e)?;
        }
        Ok(log)
    }
}
