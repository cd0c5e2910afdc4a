use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use homesense::channel_sim::SubjectKind;
use homesense::subject_id::{
    generate_corpus, leave_one_environment_out, train as train_model, CorpusSpec, FeatureVector, FoldMetrics, Label,
    LabeledWindow, SubjectError, TrainParams, FEATURE_COUNT, FEATURE_NAMES,
};

use crate::exit::invalid;
use crate::output::{config_hash, OutDir};

pub const FEATURES_FILE: &str = "features.csv";

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Corpus directory to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Windows per subject kind and environment.
    #[arg(long, default_value_t = 12)]
    pub windows_per_kind: usize,
    /// Extra human-plus-pet windows per environment, labelled human.
    #[arg(long, default_value_t = 12)]
    pub co_presence: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Corpus directory with one `env-<id>/features.csv` per environment.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Where to write `model.json` and `metrics.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = TrainParams::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = TrainParams::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = TrainParams::default().epochs)]
    pub epochs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Where to write `metrics.csv`; printed only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = TrainParams::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = TrainParams::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = TrainParams::default().epochs)]
    pub epochs: usize,
}

fn corpus_header() -> String {
    format!("label,kind,companion,{}", FeatureVector::csv_header())
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Human => "human",
        Label::NonHuman => "non_human",
    }
}

pub fn corpus(args: &CorpusArgs) -> Result<PathBuf> {
    let spec = CorpusSpec {
        windows_per_kind: args.windows_per_kind,
        co_presence_windows: args.co_presence,
        seed: args.seed,
        ..CorpusSpec::default()
    };
    let data = generate_corpus(&spec).context("generating corpus")?;
    let mut by_env: BTreeMap<u32, Vec<&LabeledWindow>> = BTreeMap::new();
    for d in &data {
        by_env.entry(d.environment).or_default().push(d);
    }
    let mut out = OutDir::create(&args.out)?;
    for (env, rows) in by_env {
        let mut text = corpus_header();
        text.push('\n');
        for d in rows {
            let companion = d.companion.map_or("", SubjectKind::as_str);
            text.push_str(&format!(
                "{},{},{companion},{}\n",
                label_name(d.label()),
                d.kind.as_str(),
                d.features.to_csv_row()
            ));
        }
        out.write(&format!("env-{env}/{FEATURES_FILE}"), text.as_bytes())?;
    }
    out.write_json("corpus.json", &spec)?;
    out.finish("corpus", Some(args.seed), Some(config_hash(&spec)))?;
    Ok(args.out.clone())
}

fn parse_env_id(name: &str) -> Option<u32> {
    name.strip_prefix("env-").and_then(|s| s.parse().ok())
}

/// Reads every `env-<id>/features.csv` under `dir`. The `label` column is
/// required; `kind` and `companion` are optional.
pub fn read_corpus(dir: &Path) -> Result<Vec<LabeledWindow>> {
    let entries = fs::read_dir(dir).map_err(|e| invalid(format!("corpus {}: {e}", dir.display())))?;
    let mut envs: Vec<(u32, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = parse_env_id(&name) {
            let file = entry.path().join(FEATURES_FILE);
            if file.is_file() {
                envs.push((id, file));
            }
        }
    }
    envs.sort();
    let mut data = Vec::new();
    for (env, file) in envs {
        let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else { continue };
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let find = |name: &str| cols.iter().position(|c| *c == name);
        let label_col =
            find("label").ok_or_else(|| invalid(format!("{}: missing `label` column", file.display())))?;
        let kind_col = find("kind");
        let companion_col = find("companion");
        let feature_cols: Vec<usize> = FEATURE_NAMES
            .iter()
            .map(|n| find(n).ok_or_else(|| invalid(format!("{}: missing feature column `{n}`", file.display()))))
            .collect::<Result<_>>()?;
        for (i, line) in lines {
            let at = |what: &str| format!("{}:{}: {what}", file.display(), i + 1);
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(invalid(at(&format!("expected {} fields, got {}", cols.len(), fields.len()))));
            }
            let label = match fields[label_col] {
                "human" => Label::Human,
                "non_human" => Label::NonHuman,
                "" => return Err(invalid(at("empty label"))),
                other => return Err(invalid(at(&format!("unknown label `{other}`")))),
            };
            let kind = match kind_col.map(|c| fields[c]) {
                Some(k) if !k.is_empty() => k.parse().map_err(|_| invalid(at(&format!("unknown kind `{k}`"))))?,
                _ if label.is_human() => SubjectKind::Human,
                _ => SubjectKind::None,
            };
            if kind.is_human() != label.is_human() {
                return Err(invalid(at("label disagrees with kind")));
            }
            let companion = match companion_col.map(|c| fields[c]) {
                Some(k) if !k.is_empty() => {
                    Some(k.parse().map_err(|_| invalid(at(&format!("unknown companion `{k}`"))))?)
                }
                _ => None,
            };
            let mut a = [0.0; FEATURE_COUNT];
            for (slot, &c) in a.iter_mut().zip(&feature_cols) {
                *slot = fields[c].parse().map_err(|_| invalid(at(&format!("bad number `{}`", fields[c]))))?;
            }
            data.push(LabeledWindow { environment: env, kind, companion, features: FeatureVector::from_array(a) });
        }
    }
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanMetrics {
    pub folds: usize,
    pub accuracy: f64,
    pub false_alarm_rate: f64,
}

pub fn mean_metrics(folds: &[FoldMetrics]) -> MeanMetrics {
    let n = folds.len().max(1) as f64;
    MeanMetrics {
        folds: folds.len(),
        accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / n,
        false_alarm_rate: folds.iter().map(|f| f.false_alarm_rate).sum::<f64>() / n,
    }
}

/// One row per fold.
pub fn metrics_csv(folds: &[FoldMetrics]) -> String {
    let mut out = String::from("held_out,windows,accuracy,false_alarm_rate,human_recall\n");
    for f in folds {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            f.held_out, f.windows, f.accuracy, f.false_alarm_rate, f.human_recall
        ));
    }
    out
}

fn loeo(data: &[LabeledWindow], params: &TrainParams) -> Result<Vec<FoldMetrics>> {
    leave_one_environment_out(data, params).map_err(|e| match e {
        SubjectError::TooFewFolds(n) => {
            invalid(format!("corpus: leave-one-environment-out needs at least 2 environments, found {n}"))
        }
        SubjectError::EmptyDataset | SubjectError::SingleClass | SubjectError::NonFinite { .. } => {
            invalid(format!("corpus: {e}"))
        }
        other => anyhow::Error::new(other),
    })
}

pub struct EvalOutcome {
    pub folds: Vec<FoldMetrics>,
    pub mean: MeanMetrics,
}

pub fn eval(args: &EvalArgs) -> Result<EvalOutcome> {
    let data = read_corpus(&args.corpus)?;
    let params = TrainParams { lambda: args.lambda, epochs: args.epochs, seed: args.seed };
    let folds = loeo(&data, &params)?;
    let mean = mean_metrics(&folds);
    if let Some(out) = &args.out {
        let mut dir = OutDir::create(out)?;
        dir.write("metrics.csv", metrics_csv(&folds).as_bytes())?;
        dir.write_json("metrics.json", &mean)?;
        dir.finish("eval", Some(args.seed), Some(config_hash(&params)))?;
    }
    Ok(EvalOutcome { folds, mean })
}

pub fn train(args: &TrainArgs) -> Result<EvalOutcome> {
    let data = read_corpus(&args.corpus)?;
    let params = TrainParams { lambda: args.lambda, epochs: args.epochs, seed: args.seed };
    let folds = loeo(&data, &params)?;
    let set: Vec<(FeatureVector, Label)> = data.iter().map(|d| (d.features, d.label())).collect();
    let model = train_model(&set, &params).map_err(|e| invalid(format!("corpus: {e}")))?;
    let mean = mean_metrics(&folds);
    let mut dir = OutDir::create(&args.out)?;
    dir.write("model.json", model.to_json().as_bytes())?;
    dir.write("metrics.csv", metrics_csv(&folds).as_bytes())?;
    dir.write_json("metrics.json", &mean)?;
    dir.finish("train", Some(args.seed), Some(config_hash(&params)))?;
    Ok(EvalOutcome { folds, mean })
}
