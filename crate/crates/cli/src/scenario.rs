use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use homesense::channel_sim::{
    attenuate_for_distance, derive_seed, generate_schedule, ChannelConfig, CsiFrame, ImpairmentConfig,
    MixtureComponent, Segment, SubjectKind, SubjectProfile, DEFAULT_RATIO_CENTER_DB, DEFAULT_RATIO_SPREAD_DB,
};
use homesense::topology::{Deployment, Link, Mode, NodeId, NodeRole, OffloadPolicy, PipelineConfig, PresenceInterval};

use crate::exit::invalid;

/// A home, its devices and what moves where, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Required; kept optional here so a missing seed is reported by name.
    pub seed: Option<u64>,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub impairments: ImpairmentConfig,
    pub topology: TopologySpec,
    #[serde(default)]
    pub bots: Vec<BotSpec>,
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default)]
    pub pipeline: PipelineSpec,
    /// Output directory; relative paths resolve against the working directory.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_rate() -> f64 {
    500.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSpec {
    pub subcarriers: usize,
    pub paths: usize,
    pub ratio_center_db: f64,
    pub ratio_spread_db: f64,
    pub coherence: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            subcarriers: 56,
            paths: 100,
            ratio_center_db: DEFAULT_RATIO_CENTER_DB,
            ratio_spread_db: DEFAULT_RATIO_SPREAD_DB,
            coherence: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub mode: String,
    pub nodes: Vec<NodeRole>,
    pub links: Vec<Link>,
}

/// Per-link channel overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BotSpec {
    pub id: NodeId,
    /// Subject-to-link distance; attenuates the motion energy ratio.
    #[serde(default)]
    pub distance_m: Option<f64>,
    #[serde(default)]
    pub coherence: Option<f64>,
}

/// A subject of `kind` moving in `region` over `[start_s, end_s)`. Entries
/// may overlap; their start times must not decrease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: String,
    pub region: u16,
    #[serde(default)]
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSpec {
    pub policy: String,
    /// Classifier model, relative to the scenario file.
    pub model: Option<PathBuf>,
    pub confidence_window: usize,
    pub alert_threshold: u8,
    pub proximity_threshold: f64,
    pub include_rows: bool,
    pub link_latency_s: f64,
    pub failover_at_s: Option<f64>,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        let d = PipelineConfig::default();
        Self {
            policy: "cloud_when_motion".into(),
            model: None,
            confidence_window: d.confidence_window,
            alert_threshold: d.alert_threshold,
            proximity_threshold: d.proximity_threshold,
            include_rows: d.include_rows,
            link_latency_s: d.link_latency_s,
            failover_at_s: None,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub policy: Option<String>,
}

/// A validated scenario plus where it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub seed: u64,
    pub deployment: Deployment,
    pub policy: OffloadPolicy,
    pub kinds: Vec<SubjectKind>,
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("scenario: {e}")))
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Loaded> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
        let mut scenario = Self::from_toml(&text)?;
        if let Some(seed) = overrides.seed {
            scenario.seed = Some(seed);
        }
        if let Some(mode) = &overrides.mode {
            scenario.topology.mode = mode.clone();
        }
        if let Some(policy) = &overrides.policy {
            scenario.pipeline.policy = policy.clone();
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        scenario.validate(base_dir)
    }

    /// Checks every field and resolves names; errors name the offending field.
    pub fn validate(self, base_dir: PathBuf) -> Result<Loaded> {
        let seed = self.seed.ok_or_else(|| invalid("seed: required for reproducibility"))?;
        if self.name.trim().is_empty() {
            return Err(invalid("name: must not be empty"));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(invalid(format!("sample_rate_hz: must be > 0, got {}", self.sample_rate_hz)));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid(format!("duration_s: must be > 0, got {}", self.duration_s)));
        }
        let mode: Mode = self.topology.mode.parse().map_err(|_| {
            invalid(format!(
                "topology.mode: unknown mode `{}` (direct_to_master or origin_aggregated)",
                self.topology.mode
            ))
        })?;
        let policy: OffloadPolicy = self.pipeline.policy.parse().map_err(|_| {
            invalid(format!(
                "pipeline.policy: unknown policy `{}` (edge_only, cloud_when_motion or always_cloud)",
                self.pipeline.policy
            ))
        })?;
        let deployment =
            Deployment { nodes: self.topology.nodes.clone(), links: self.topology.links.clone(), mode };
        deployment.validate().map_err(|e| invalid(format!("topology: {e}")))?;
        let bots = deployment.bots();
        for (i, b) in self.bots.iter().enumerate() {
            if !bots.contains(&b.id) {
                return Err(invalid(format!("bots[{i}].id: {} is not a bot in the topology", b.id)));
            }
            if let Some(d) = b.distance_m {
                if !(d.is_finite() && d > 0.0) {
                    return Err(invalid(format!("bots[{i}].distance_m: must be > 0, got {d}")));
                }
            }
        }
        let mut kinds = Vec::with_capacity(self.schedule.len());
        let mut previous = f64::NEG_INFINITY;
        for (i, e) in self.schedule.iter().enumerate() {
            let kind: SubjectKind = e
                .kind
                .parse()
                .map_err(|_| invalid(format!("schedule[{i}].kind: unknown subject kind `{}`", e.kind)))?;
            if !(e.start_s.is_finite() && e.start_s >= 0.0) {
                return Err(invalid(format!("schedule[{i}].start_s: must be >= 0")));
            }
            if e.start_s < previous {
                return Err(invalid(format!("schedule[{i}].start_s: start times must not decrease")));
            }
            if !(e.end_s.is_finite() && e.end_s > e.start_s && e.end_s <= self.duration_s + 1e-9) {
                return Err(invalid(format!("schedule[{i}].end_s: must lie in (start_s, duration_s]")));
            }
            if !e.gain_db.is_finite() {
                return Err(invalid(format!("schedule[{i}].gain_db: must be finite")));
            }
            previous = e.start_s;
            kinds.push(kind);
        }
        if let Some(t) = self.pipeline.failover_at_s {
            if !(t.is_finite() && t >= 0.0) {
                return Err(invalid("pipeline.failover_at_s: must be >= 0"));
            }
        }
        let loaded = Loaded { scenario: self, seed, deployment, policy, kinds, base_dir };
        for &b in &bots {
            loaded.channel_for(b).validate().map_err(|e| invalid(format!("channel for bot {b}: {e}")))?;
        }
        loaded.scenario.impairments.validate().map_err(|e| invalid(format!("impairments: {e}")))?;
        Ok(loaded)
    }
}

impl Loaded {
    /// The scenario as run, with overrides and the seed folded in.
    pub fn resolved(&self) -> Scenario {
        let mut s = self.scenario.clone();
        s.seed = Some(self.seed);
        s
    }

    pub fn model_path(&self) -> Option<PathBuf> {
        self.scenario.pipeline.model.as_ref().map(|m| if m.is_absolute() { m.clone() } else { self.base_dir.join(m) })
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let p = &self.scenario.pipeline;
        PipelineConfig {
            sample_rate_hz: self.scenario.sample_rate_hz,
            policy: self.policy,
            confidence_window: p.confidence_window,
            alert_threshold: p.alert_threshold,
            proximity_threshold: p.proximity_threshold,
            include_rows: p.include_rows,
            link_latency_s: p.link_latency_s,
            failover_at_s: p.failover_at_s,
            ..PipelineConfig::default()
        }
    }

    pub fn channel_for(&self, bot: NodeId) -> ChannelConfig {
        let c = &self.scenario.channel;
        let spec = self.scenario.bots.iter().find(|b| b.id == bot);
        let mut cfg = ChannelConfig::new(derive_seed(self.seed, bot as u64 + 1))
            .with_device(bot)
            .with_sample_rate(self.scenario.sample_rate_hz)
            .with_paths(c.paths)
            .with_coherence(spec.and_then(|s| s.coherence).unwrap_or(c.coherence));
        cfg.subcarrier_count = c.subcarriers;
        cfg.spread_ratio(c.ratio_center_db, c.ratio_spread_db);
        match spec.and_then(|s| s.distance_m) {
            Some(d) => attenuate_for_distance(&cfg, d).unwrap_or(cfg),
            None => cfg,
        }
    }

    /// Piecewise-constant segments seen by `bot`: a subject contributes only
    /// while it is in the bot's zone.
    pub fn segments_for(&self, bot: NodeId) -> Vec<Segment> {
        let zone = self.deployment.zone_of(bot);
        let duration = self.scenario.duration_s;
        let mut cuts = vec![0.0, duration];
        for e in &self.scenario.schedule {
            cuts.push(e.start_s);
            cuts.push(e.end_s);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        cuts.retain(|&t| t <= duration + 1e-9);
        cuts.windows(2)
            .filter(|w| w[1] - w[0] > 1e-9)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let components = self
                    .scenario
                    .schedule
                    .iter()
                    .zip(&self.kinds)
                    .filter(|(e, _)| e.region == zone && e.start_s <= mid && mid < e.end_s)
                    .map(|(e, &k)| MixtureComponent::new(SubjectProfile::default_for(k)).with_gain_db(e.gain_db))
                    .collect();
                Segment { duration_s: w[1] - w[0], components }
            })
            .collect()
    }

    pub fn generate_traces(&self) -> Result<BTreeMap<NodeId, Vec<CsiFrame>>> {
        let mut out = BTreeMap::new();
        for b in self.deployment.bots() {
            let frames = generate_schedule(&self.channel_for(b), &self.segments_for(b), &self.scenario.impairments)
                .with_context(|| format!("generating trace for bot {b}"))?;
            out.insert(b, frames);
        }
        Ok(out)
    }

    /// Where subjects were, for coverage. Entries of kind `none` are skipped.
    pub fn presence(&self) -> Vec<PresenceInterval> {
        self.scenario
            .schedule
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k != SubjectKind::None)
            .map(|(e, _)| PresenceInterval { region: e.region, start_s: e.start_s, end_s: e.end_s })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
seed = 3
sample_rate_hz = 100.0
duration_s = 24.0

[topology]
mode = "direct_to_master"
nodes = [{ id = 0, role = "master_origin" }, { id = 1, role = "bot" }, { id = 2, role = "bot" }]
links = [{ child = 1, parent = 0 }, { child = 2, parent = 0 }]

[[schedule]]
start_s = 6.0
end_s = 18.0
kind = "human"
region = 1
"#;

    fn load(text: &str) -> Result<Loaded> {
        Scenario::from_toml(text)?.validate(PathBuf::new())
    }

    #[test]
    fn segments_follow_the_subject() {
        let l = load(BASE).unwrap();
        let s1 = l.segments_for(1);
        assert_eq!(s1.iter().map(|s| s.duration_s).collect::<Vec<_>>(), vec![6.0, 12.0, 6.0]);
        assert_eq!(s1[1].components.len(), 1);
        assert!(l.segments_for(2).iter().all(|s| s.components.is_empty()));
        assert_eq!(l.presence().len(), 1);
    }

    #[test]
    fn unknown_kind_names_the_field() {
        let err = load(&BASE.replace("\"human\"", "\"cat\"")).unwrap_err();
        assert!(err.to_string().contains("schedule[0].kind"), "{err}");
        assert!(crate::exit::code_of(&err) == crate::exit::VALIDATION);
    }

    #[test]
    fn seed_is_required() {
        let err = load(&BASE.replace("seed = 3\n", "")).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn decreasing_schedule_is_rejected() {
        let text = format!("{BASE}\n[[schedule]]\nstart_s = 2.0\nend_s = 4.0\nkind = \"pet\"\nregion = 2\n");
        assert!(load(&text).unwrap_err().to_string().contains("schedule[1].start_s"));
    }

    #[test]
    fn traces_are_deterministic() {
        let l = load(BASE).unwrap();
        let a = l.generate_traces().unwrap();
        assert_eq!(a, l.generate_traces().unwrap());
        assert_eq!(a[&1].len(), 2400);
    }
}
