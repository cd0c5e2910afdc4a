use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use homesense::channel_sim::{generate_trace, write_trace_text, ChannelConfig, ImpairmentConfig, SubjectProfile};
use homesense_cli::commands::{self, EvalArgs, QualifyArgs, RunArgs, ScenarioArgs};
use homesense_cli::output::Manifest;

const SMALL: &str = r#"
name = "small"
seed = 11
sample_rate_hz = 100.0
duration_s = 30.0

[topology]
mode = "origin_aggregated"
nodes = [{ id = 0, role = "master_origin" }, { id = 5, role = "origin" }, { id = 1, role = "bot" }, { id = 2, role = "bot" }]
links = [{ child = 5, parent = 0 }, { child = 1, parent = 5 }, { child = 2, parent = 0 }]

[[schedule]]
start_s = 0.0
end_s = 18.0
kind = "human"
region = 1

[[schedule]]
start_s = 12.0
end_s = 30.0
kind = "fan"
region = 2

[pipeline]
policy = "edge_only"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_homesense"))
}

fn scenario(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/demo.toml")
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_one_trace_per_bot_and_repeats_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), SMALL);
    let run = |out: &str, seed: Option<u64>| {
        let mut a = ScenarioArgs::new(&s);
        a.out = Some(tmp.path().join(out));
        a.seed = seed;
        commands::simulate(&a).unwrap();
        manifest(&tmp.path().join(out))
    };
    let a = run("a", None);
    let b = run("b", None);
    let c = run("c", Some(12));
    let traces: Vec<_> = a.files.iter().filter(|f| f.path.starts_with("traces/")).collect();
    assert_eq!(traces.len(), 2);
    assert_eq!(a, b);
    assert_ne!(a.files, c.files);
    assert_eq!(a.seed, Some(11));
    let text = fs::read(tmp.path().join("a").join(&traces[0].path)).unwrap();
    assert_eq!(homesense_cli::output::sha256_hex(&text), traces[0].sha256);
}

#[test]
fn unknown_kind_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), &SMALL.replace("\"fan\"", "\"ghost\""));
    let out = bin().args(["simulate", "--scenario"]).arg(&s).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("schedule[1].kind"), "{err}");
}

#[test]
fn missing_seed_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), &SMALL.replace("seed = 11\n", ""));
    let out = bin().args(["simulate", "--scenario"]).arg(&s).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let out = bin().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cloud_policy_without_model_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), SMALL);
    let out = bin()
        .args(["run", "--policy", "cloud_when_motion", "--scenario"])
        .arg(&s)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model"));
}

#[test]
fn edge_only_uploads_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = RunArgs::new(scenario(tmp.path(), SMALL));
    a.common.out = Some(tmp.path().join("o"));
    let o = commands::run(&a).unwrap();
    assert_eq!(o.report.traffic.upload_bytes, 0);
    assert_eq!(o.report.bandwidth.upload_bytes, 0);
    assert!(o.report.motion_events > 0);
    assert!(o.report.passed());
    let csv = fs::read_to_string(tmp.path().join("o/accounting.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[5], "0");
    let cov = fs::read_to_string(tmp.path().join("o/coverage.csv")).unwrap();
    assert_eq!(cov.lines().count(), 3);
}

#[test]
fn corrupted_trace_lines_are_skipped_and_counted() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), SMALL);
    let mut sim = ScenarioArgs::new(&s);
    sim.out = Some(tmp.path().join("sim"));
    commands::simulate(&sim).unwrap();
    let trace = tmp.path().join("sim/traces/bot-1.csi");
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[40] = "this is not a frame".into();
    lines[41].truncate(20);
    fs::write(&trace, lines.join("\n")).unwrap();

    let out = bin()
        .args(["run", "--scenario"])
        .arg(&s)
        .arg("--traces")
        .arg(tmp.path().join("sim/traces"))
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stderr).matches("warning").count(), 2);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["skipped_trace_lines"], 2);
}

#[test]
fn demo_raises_a_human_alert_and_repeats_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let go = |name: &str| {
        let mut a = RunArgs::new(demo());
        a.common.out = Some(tmp.path().join(name));
        commands::run(&a).unwrap()
    };
    let first = go("a");
    assert!(first.report.human_alerts >= 1);
    assert!(first.report.passed());
    go("b");
    for f in ["events.ndjson", "accounting.csv", "coverage.csv", "report.json", "manifest.json"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn inline_cache_gives_the_same_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), SMALL);
    let go = |name: &str| {
        let mut a = RunArgs::new(&s);
        a.common.out = Some(tmp.path().join(name));
        a.cache = Some(tmp.path().join("cache"));
        commands::run(&a).unwrap();
        fs::read(tmp.path().join(name).join("report.json")).unwrap()
    };
    let cold = go("a");
    assert_eq!(fs::read_dir(tmp.path().join("cache")).unwrap().count(), 1);
    assert_eq!(cold, go("b"));
}

#[test]
fn modes_and_failover_give_the_same_event_log() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario(tmp.path(), SMALL);
    let go = |name: &str, mode: &str, failover: Option<f64>| {
        let mut a = RunArgs::new(&s);
        a.common.out = Some(tmp.path().join(name));
        a.common.mode = Some(mode.into());
        a.failover_at = failover;
        commands::run(&a).unwrap();
        fs::read(tmp.path().join(name).join("events.ndjson")).unwrap()
    };
    let base = go("a", "origin_aggregated", None);
    assert_eq!(base, go("b", "direct_to_master", None));
    assert_eq!(base, go("c", "origin_aggregated", Some(13.0)));
    assert_eq!(base, go("d", "direct_to_master", Some(13.0)));
}

#[test]
fn corpus_train_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let out = bin()
        .args(["corpus", "--windows-per-kind", "3", "--co-presence", "0", "--out"])
        .arg(&corpus)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let header = fs::read_to_string(corpus.join("env-0/features.csv")).unwrap();
    assert!(header.starts_with("label,kind,companion,"));

    let out = bin().args(["train", "--corpus"]).arg(&corpus).arg("--out").arg(tmp.path().join("m")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(tmp.path().join("m/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 5);
    assert!(tmp.path().join("m/model.json").is_file());

    let e = commands::eval(&EvalArgs { corpus: corpus.clone(), out: None, seed: 1, lambda: 1e-3, epochs: 60 }).unwrap();
    assert_eq!(e.folds.len(), 5);

    for env in 1..5 {
        fs::remove_dir_all(corpus.join(format!("env-{env}"))).unwrap();
    }
    let out = bin().args(["eval", "--corpus"]).arg(&corpus).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2"));
}

fn trace_file(dir: &Path, name: &str, seed: u64, subject: &SubjectProfile) -> PathBuf {
    let cfg = ChannelConfig::new(seed).with_sample_rate(500.0);
    let frames = generate_trace(&cfg, subject, 30.0, &ImpairmentConfig::none()).unwrap();
    let p = dir.join(name);
    let mut buf = Vec::new();
    write_trace_text(&frames, &mut buf).unwrap();
    fs::write(&p, buf).unwrap();
    p
}

#[test]
fn qualify_without_model_flags_the_omission() {
    let tmp = tempfile::tempdir().unwrap();
    let walk = trace_file(tmp.path(), "walk.csi", 3, &SubjectProfile::human());
    let still = trace_file(tmp.path(), "still.csi", 4, &SubjectProfile::none());
    let args = |w: &Path, s: &Path| QualifyArgs {
        walk: w.into(),
        still: s.into(),
        model: None,
        rate: 500.0,
        trace_len: 30.0,
        out: Some(tmp.path().join("q")),
    };
    let good = commands::qualify(&args(&walk, &still)).unwrap().report;
    assert!(good.qualified, "{good:?}");
    assert!(good.human_score_omitted && good.human_score.is_none());
    assert!(tmp.path().join("q/quality.json").is_file());
    let swapped = commands::qualify(&args(&still, &walk)).unwrap().report;
    assert!(!swapped.qualified, "{swapped:?}");
}

#[test]
fn account_prints_shares() {
    let out = bin().args(["account", "--duty", "0.01"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["acf_share_pct"].as_f64().unwrap() <= 40.0);
    assert!(v["daily_share_pct"].as_f64().unwrap() <= 1.0);
}
