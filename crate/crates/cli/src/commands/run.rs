use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use homesense::channel_sim::{read_trace_text, write_trace_text, CsiFrame};
use homesense::foundation::Verdict;
use homesense::subject_id::ClassifierModel;
use homesense::topology::{
    account_bandwidth, fuse_coverage, run_pipeline, BandwidthReport, CoverageReport, DetectionLog, Failover, Mode,
    NodeId, OffloadPolicy, PipelineOutput, Traffic, TopologyError,
};

use crate::exit::{invalid, AcceptanceFailure};
use crate::output::{config_hash, resolve_out, sha256_hex, OutDir};
use crate::scenario::{Loaded, Overrides, Scenario};

/// Environment variable naming a directory of cached inline traces.
pub const CACHE_ENV: &str = "HOMESENSE_CACHE";

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// direct_to_master or origin_aggregated.
    #[arg(long)]
    pub mode: Option<String>,
    /// edge_only, cloud_when_motion or always_cloud.
    #[arg(long)]
    pub policy: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ScenarioArgs {
    pub fn new(scenario: impl Into<PathBuf>) -> Self {
        Self { scenario: scenario.into(), seed: None, mode: None, policy: None, out: None }
    }

    fn load(&self) -> Result<Loaded> {
        let overrides = Overrides { seed: self.seed, mode: self.mode.clone(), policy: self.policy.clone() };
        Scenario::load(&self.scenario, &overrides)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    /// Classifier model; overrides the scenario's.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Read `bot-<id>.csi` traces from here instead of generating them.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Promote a standby origin at this trace time.
    #[arg(long)]
    pub failover_at: Option<f64>,
    /// Reuse generated traces keyed by their configuration (also `HOMESENSE_CACHE`).
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

impl RunArgs {
    pub fn new(scenario: impl Into<PathBuf>) -> Self {
        Self { common: ScenarioArgs::new(scenario), model: None, traces: None, failover_at: None, cache: None }
    }
}

fn trace_name(bot: NodeId) -> String {
    format!("bot-{bot}.csi")
}

/// The inputs that decide trace contents.
fn trace_key(l: &Loaded) -> String {
    let s = &l.scenario;
    config_hash(&(
        l.seed,
        s.sample_rate_hz,
        s.duration_s,
        &s.channel,
        &s.impairments,
        &s.topology,
        &s.bots,
        &s.schedule,
    ))
}

pub fn simulate(args: &ScenarioArgs) -> Result<PathBuf> {
    let loaded = args.load()?;
    let resolved = loaded.resolved();
    let hash = config_hash(&resolved);
    let out_dir = resolve_out(args.out.as_deref(), resolved.out_dir.as_deref(), &resolved.name);
    let mut out = OutDir::create(&out_dir)?;
    for (bot, frames) in loaded.generate_traces()? {
        let mut buf = Vec::new();
        write_trace_text(&frames, &mut buf)?;
        out.write(&format!("traces/{}", trace_name(bot)), &buf)?;
    }
    out.write_json("scenario.json", &resolved)?;
    out.finish("simulate", Some(loaded.seed), Some(hash))?;
    Ok(out_dir)
}

struct Traces {
    frames: BTreeMap<NodeId, Vec<CsiFrame>>,
    skipped: usize,
    warnings: Vec<String>,
}

fn read_traces(dir: &Path, bots: &[NodeId]) -> Result<Traces> {
    let mut t = Traces { frames: BTreeMap::new(), skipped: 0, warnings: Vec::new() };
    for &bot in bots {
        let path = dir.join(trace_name(bot));
        let file = File::open(&path).map_err(|e| invalid(format!("trace {}: {e}", path.display())))?;
        let report = read_trace_text(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        for (line, reason) in &report.skipped {
            t.warnings.push(format!("{}:{line}: skipped ({reason})", trace_name(bot)));
        }
        t.skipped += report.skipped.len();
        t.frames.insert(bot, report.frames);
    }
    Ok(t)
}

fn inline_traces(l: &Loaded, cache: Option<&Path>) -> Result<Traces> {
    let Some(cache) = cache else {
        return Ok(Traces { frames: l.generate_traces()?, skipped: 0, warnings: Vec::new() });
    };
    let dir = cache.join(trace_key(l));
    let bots = l.deployment.bots();
    if bots.iter().all(|&b| dir.join(trace_name(b)).is_file()) {
        let t = read_traces(&dir, &bots)?;
        if t.skipped == 0 {
            return Ok(t);
        }
    }
    let frames = l.generate_traces()?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating cache {}", dir.display()))?;
    for (bot, f) in &frames {
        let mut buf = Vec::new();
        write_trace_text(f, &mut buf)?;
        std::fs::write(dir.join(trace_name(*bot)), buf)?;
    }
    Ok(Traces { frames, skipped: 0, warnings: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub mode: Mode,
    pub policy: OffloadPolicy,
    pub model_sha256: Option<String>,
    pub events: usize,
    pub motion_events: usize,
    pub alerts: usize,
    pub human_alerts: usize,
    pub skipped_trace_lines: usize,
    pub warnings: Vec<String>,
    pub traffic: Traffic,
    pub bandwidth: BandwidthReport,
    pub coverage: Option<CoverageReport>,
    pub failover: Option<Failover>,
    pub invariants: Vec<Check>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

/// Post-run checks over the pipeline output.
fn invariants(l: &Loaded, traces: &BTreeMap<NodeId, Vec<CsiFrame>>, out: &PipelineOutput, ndjson: &str) -> Vec<Check> {
    let log = &out.log;
    let motion: BTreeSet<(u16, u64)> = log
        .events()
        .iter()
        .filter(|e| e.verdict == Verdict::Motion)
        .map(|e| (e.device_id, e.window_index))
        .collect();
    let uploaded: BTreeSet<(u16, u64)> =
        out.uploads.iter().map(|u| (u.device_id, u64::from(u.window_index))).collect();
    let sound = match l.policy {
        OffloadPolicy::EdgeOnly => out.uploads.is_empty() && out.traffic.upload_bytes == 0,
        OffloadPolicy::CloudWhenMotion => uploaded == motion,
        OffloadPolicy::AlwaysCloud => uploaded.len() == log.len(),
    } && uploaded.len() == out.uploads.len()
        && out.traffic.upload_messages as usize == out.uploads.len();
    let mut checks = vec![check(
        "event_driven_upload",
        sound,
        format!("{} uploads for {} motion windows", out.uploads.len(), motion.len()),
    )];

    let reparsed = DetectionLog::from_ndjson(ndjson);
    checks.push(check(
        "per_device_monotone",
        reparsed.as_ref().is_ok_and(|r| r == log),
        match &reparsed {
            Ok(_) => "event log re-reads in order".into(),
            Err(e) => e.to_string(),
        },
    ));

    let frames: u64 = traces.values().map(|t| t.len() as u64).sum();
    let mut per_device: BTreeMap<u16, BTreeSet<u64>> = BTreeMap::new();
    let mut duplicates = 0;
    for e in log.events() {
        duplicates += usize::from(!per_device.entry(e.device_id).or_default().insert(e.window_index));
    }
    checks.push(check(
        "conservation",
        out.traffic.raw_frames == frames && duplicates == 0,
        format!("{} of {frames} frames sent, {duplicates} duplicate windows", out.traffic.raw_frames),
    ));

    if out.failover.is_none() {
        let master = l.deployment.master().unwrap_or_default();
        let at_master: u64 = traces
            .iter()
            .filter(|(b, _)| l.deployment.processor_of(**b).ok() == Some(master))
            .map(|(_, t)| t.len() as u64)
            .sum();
        let ok = out.traffic.raw_frames_at_master == at_master
            && (l.deployment.mode == Mode::OriginAggregated || at_master == frames);
        checks.push(check(
            "mode_contract",
            ok,
            format!("{} raw frames reached the master, expected {at_master}", out.traffic.raw_frames_at_master),
        ));
    }
    checks
}

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub report: RunReport,
}

pub fn run(args: &RunArgs) -> Result<RunOutcome> {
    let mut loaded = args.common.load()?;
    if let Some(t) = args.failover_at {
        if !(t.is_finite() && t >= 0.0) {
            return Err(invalid("--failover-at: must be >= 0"));
        }
        loaded.scenario.pipeline.failover_at_s = Some(t);
    }
    let resolved = loaded.resolved();
    let hash = config_hash(&resolved);

    let model_path = args.model.clone().or_else(|| loaded.model_path());
    let (model, model_sha256) = match (loaded.policy, model_path) {
        (OffloadPolicy::EdgeOnly, _) => (None, None),
        (_, None) => {
            return Err(invalid(format!(
                "pipeline.model: policy `{}` needs a classifier model (--model)",
                resolved.pipeline.policy
            )))
        }
        (_, Some(path)) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| invalid(format!("model file {}: {e}", path.display())))?;
            let model = ClassifierModel::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            (Some(model), Some(sha256_hex(text.as_bytes())))
        }
    };

    let bots = loaded.deployment.bots();
    let cache = args.cache.clone().or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from));
    let traces = match &args.traces {
        Some(dir) => read_traces(dir, &bots)?,
        None => inline_traces(&loaded, cache.as_deref())?,
    };
    for w in &traces.warnings {
        eprintln!("warning: {w}");
    }

    let cfg = loaded.pipeline_config();
    let out = run_pipeline(&loaded.deployment, &traces.frames, model.as_ref(), &cfg).map_err(|e| match e {
        TopologyError::MissingModel
        | TopologyError::Malformed(_)
        | TopologyError::UnknownTrace(_)
        | TopologyError::NoMaster
        | TopologyError::DuplicateMaster(_) => invalid(e.to_string()),
        other => anyhow::Error::new(other).context("running pipeline"),
    })?;

    let window_len = cfg.sensing.window_len_s;
    let ndjson = out.log.to_ndjson();
    let bandwidth = account_bandwidth(&traces.frames, &out.uploads, window_len);
    let presence = loaded.presence();
    let coverage = if presence.is_empty() {
        None
    } else {
        Some(fuse_coverage(&out.log.decisions(), &presence, window_len)?)
    };
    let checks = invariants(&loaded, &traces.frames, &out, &ndjson);

    let report = RunReport {
        name: resolved.name.clone(),
        seed: loaded.seed,
        config_hash: hash.clone(),
        mode: loaded.deployment.mode,
        policy: loaded.policy,
        model_sha256,
        events: out.log.len(),
        motion_events: out.log.events().iter().filter(|e| e.verdict == Verdict::Motion).count(),
        alerts: out.log.alerts().count(),
        human_alerts: out.log.alerts().filter(|e| e.classification.is_some_and(|c| c.label.is_human())).count(),
        skipped_trace_lines: traces.skipped,
        warnings: traces.warnings,
        traffic: out.traffic.clone(),
        bandwidth: bandwidth.clone(),
        coverage: coverage.clone(),
        failover: out.failover,
        invariants: checks,
    };

    let out_dir = resolve_out(args.common.out.as_deref(), resolved.out_dir.as_deref(), &resolved.name);
    let mut dir = OutDir::create(&out_dir)?;
    dir.write("events.ndjson", ndjson.as_bytes())?;
    dir.write("accounting.csv", bandwidth.to_csv().as_bytes())?;
    let coverage_csv = coverage.as_ref().map_or_else(|| CoverageReport { regions: Vec::new() }.to_csv(), |c| c.to_csv());
    dir.write("coverage.csv", coverage_csv.as_bytes())?;
    dir.write_json("report.json", &report)?;
    dir.finish("run", Some(loaded.seed), Some(hash))?;

    if !report.passed() {
        let failed: Vec<&str> = report.invariants.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(AcceptanceFailure(failed.join(", ")).into());
    }
    Ok(RunOutcome { out_dir, report })
}
