use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use homesense::channel_sim::{
    generate_trace, read_trace_text, ChannelConfig, CsiFrame, ImpairmentConfig, SubjectProfile, BINARY_BYTES_PER_GAIN,
    BINARY_FRAME_HEADER_BYTES,
};
use homesense::foundation::{SensingConfig, WindowOutcome, WindowedSensor};
use homesense::quality::{qualification_test, QualityConfig, QualityReport};
use homesense::subject_id::ClassifierModel;
use homesense::topology::{project_daily, DailyProjection, UploadMessage};

use crate::exit::invalid;
use crate::output::{config_hash, OutDir};

#[derive(Debug, Clone, Args)]
pub struct QualifyArgs {
    /// Trace recorded while someone walks near the link.
    #[arg(long)]
    pub walk: PathBuf,
    /// Trace recorded with the room empty.
    #[arg(long = "static")]
    pub still: PathBuf,
    /// Classifier model; without it the human sub-score is omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 500.0)]
    pub rate: f64,
    /// Nominal trace length in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub trace_len: f64,
    /// Directory for `quality.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QualifyOutcome {
    pub report: QualityReport,
    pub skipped_trace_lines: usize,
    pub warnings: Vec<String>,
}

fn read_trace(path: &Path, warnings: &mut Vec<String>) -> Result<(Vec<CsiFrame>, usize)> {
    let file = File::open(path).map_err(|e| invalid(format!("trace {}: {e}", path.display())))?;
    let report = read_trace_text(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    for (line, reason) in &report.skipped {
        warnings.push(format!("{}:{line}: skipped ({reason})", path.display()));
    }
    Ok((report.frames, report.skipped.len()))
}

pub fn qualify(args: &QualifyArgs) -> Result<QualifyOutcome> {
    let mut warnings = Vec::new();
    let (walk, a) = read_trace(&args.walk, &mut warnings)?;
    let (still, b) = read_trace(&args.still, &mut warnings)?;
    let model = match &args.model {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| invalid(format!("model file {}: {e}", p.display())))?;
            Some(ClassifierModel::from_json(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let cfg = QualityConfig { sample_rate_hz: args.rate, trace_len_s: args.trace_len, ..QualityConfig::default() };
    let report = qualification_test(&walk, &still, model.as_ref(), &cfg).map_err(|e| invalid(e.to_string()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let outcome = QualifyOutcome { report, skipped_trace_lines: a + b, warnings };
    if let Some(out) = &args.out {
        let mut dir = OutDir::create(out)?;
        dir.write_json("quality.json", &outcome)?;
        dir.finish("qualify", None, Some(config_hash(&cfg)))?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Args)]
pub struct AccountArgs {
    /// CSI sample rate per device.
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 56)]
    pub subcarriers: usize,
    /// Fraction of windows with motion over the day.
    #[arg(long, default_value_t = 0.01)]
    pub duty: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory for `account.json` and `account.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccountReport {
    pub sample_rate_hz: f64,
    pub subcarriers: usize,
    pub window_len_s: f64,
    pub raw_bytes_per_s: f64,
    pub upload_bytes: usize,
    pub acf_bytes_per_s: f64,
    /// ACF bytes as a percentage of raw bytes, per second of data.
    pub acf_share_pct: f64,
    pub motion_duty: f64,
    pub daily: DailyProjection,
    /// Event-driven bytes as a percentage of continuous raw bytes over 24 h.
    pub daily_share_pct: f64,
}

impl AccountReport {
    pub fn to_csv(&self) -> String {
        format!(
            "sample_rate_hz,subcarriers,window_len_s,raw_bytes_per_s,upload_bytes,acf_bytes_per_s,acf_share_pct,motion_duty,daily_raw_bytes,daily_uploads,daily_event_bytes,daily_share_pct\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.sample_rate_hz,
            self.subcarriers,
            self.window_len_s,
            self.raw_bytes_per_s,
            self.upload_bytes,
            self.acf_bytes_per_s,
            self.acf_share_pct,
            self.motion_duty,
            self.daily.continuous_raw_bytes,
            self.daily.uploads,
            self.daily.event_driven_bytes,
            self.daily_share_pct,
        )
    }
}

/// Encodes one real motion window at the given rate and compares its
/// upload against raw streaming.
pub fn account_report(rate: f64, subcarriers: usize, duty: f64, seed: u64) -> Result<AccountReport> {
    if !(0.0..=1.0).contains(&duty) {
        return Err(invalid(format!("--duty: must lie in [0, 1], got {duty}")));
    }
    let sensing = SensingConfig::default();
    let cfg = ChannelConfig::new(seed).with_sample_rate(rate).with_subcarriers(subcarriers);
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    let frames = generate_trace(&cfg, &SubjectProfile::human(), sensing.window_len_s, &ImpairmentConfig::none())?;
    let mut sensor = WindowedSensor::new(sensing, rate).map_err(|e| invalid(e.to_string()))?;
    let mut outcome = None;
    for f in &frames {
        outcome = outcome.or(sensor.push(f));
    }
    let outcome = outcome.or_else(|| sensor.finish());
    let Some(WindowOutcome::Analyzed { index, analysis }) = outcome else {
        anyhow::bail!("reference window was not analysed");
    };
    let upload_bytes = UploadMessage::from_analysis(0, index, &analysis, false).payload_bytes();
    let raw_bytes_per_s = rate * (BINARY_FRAME_HEADER_BYTES + BINARY_BYTES_PER_GAIN * subcarriers) as f64;
    let acf_bytes_per_s = upload_bytes as f64 / sensing.window_len_s;
    let daily = project_daily(rate, subcarriers, sensing.window_len_s, upload_bytes, duty);
    Ok(AccountReport {
        sample_rate_hz: rate,
        subcarriers,
        window_len_s: sensing.window_len_s,
        raw_bytes_per_s,
        upload_bytes,
        acf_bytes_per_s,
        acf_share_pct: 100.0 * acf_bytes_per_s / raw_bytes_per_s,
        motion_duty: duty,
        daily,
        daily_share_pct: 100.0 * daily.event_driven_bytes / daily.continuous_raw_bytes,
    })
}

pub fn account(args: &AccountArgs) -> Result<AccountReport> {
    let report = account_report(args.rate, args.subcarriers, args.duty, args.seed)?;
    if let Some(out) = &args.out {
        let mut dir = OutDir::create(out)?;
        dir.write_json("account.json", &report)?;
        dir.write("account.csv", report.to_csv().as_bytes())?;
        dir.finish("account", Some(args.seed), None)?;
    }
    Ok(report)
}
