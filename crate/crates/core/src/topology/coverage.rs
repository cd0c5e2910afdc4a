use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::foundation::MotionDecision;

use super::TopologyError;

/// A region counts as covered when its detection probability is strictly
/// above this.
pub const COVERED_ABOVE: f64 = 0.8;

/// The subject was in `region` over `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresenceInterval {
    pub region: u16,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCoverage {
    pub region: u16,
    /// Windows whose midpoint falls inside the region's presence intervals.
    pub windows: usize,
    pub detected: usize,
    pub probability: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub regions: Vec<RegionCoverage>,
}

impl CoverageReport {
    pub fn covered_count(&self) -> usize {
        self.regions.iter().filter(|r| r.covered).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("region,windows,detected,probability,covered\n");
        for r in &self.regions {
            out.push_str(&format!("{},{},{},{},{}\n", r.region, r.windows, r.detected, r.probability, r.covered));
        }
        out
    }
}

/// Per-region detection probability with the links' decisions OR-ed per
/// window. A window counts toward every region occupied at its midpoint. `per_link` maps a link to `(window index, decision)` pairs on a
/// shared grid of `window_len_s` windows.
pub fn fuse_coverage(
    per_link: &BTreeMap<u16, Vec<(u64, MotionDecision)>>,
    truth: &[PresenceInterval],
    window_len_s: f64,
) -> Result<CoverageReport, TopologyError> {
    if truth.is_empty() {
        return Err(TopologyError::EmptyTruth);
    }
    let mut fused: BTreeMap<u64, bool> = BTreeMap::new();
    for decisions in per_link.values() {
        for (k, d) in decisions {
            *fused.entry(*k).or_default() |= d.is_motion();
        }
    }
    let regions: BTreeSet<u16> = truth.iter().map(|p| p.region).collect();
    let mut tallies: BTreeMap<u16, (usize, usize)> = regions.iter().map(|&r| (r, (0, 0))).collect();
    let last = truth.iter().map(|p| p.end_s).fold(0.0, f64::max);
    let count = (last / window_len_s).ceil() as u64;
    for k in 0..count {
        let mid = (k as f64 + 0.5) * window_len_s;
        let present: BTreeSet<u16> =
            truth.iter().filter(|p| p.start_s <= mid && mid < p.end_s).map(|p| p.region).collect();
        let hit = fused.get(&k).copied().unwrap_or(false);
        for region in present {
            let t = tallies.get_mut(&region).expect("region listed");
            t.0 += 1;
            t.1 += usize::from(hit);
        }
    }
    let regions = tallies
        .into_iter()
        .map(|(region, (windows, detected))| {
            let probability = if windows == 0 { 0.0 } else { detected as f64 / windows as f64 };
            RegionCoverage { region, windows, detected, probability, covered: probability > COVERED_ABOVE }
        })
        .collect();
    Ok(CoverageReport { regions })
}
