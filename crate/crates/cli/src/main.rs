use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use homesense_cli::commands::{self, AccountArgs, CorpusArgs, EvalArgs, QualifyArgs, RunArgs, ScenarioArgs, TrainArgs};
use homesense_cli::exit;

/// WiFi CSI home sensing: simulate, run, train and qualify.
///
/// Exit codes: 0 success, 1 usage, 2 validation, 3 runtime, 4 acceptance.
/// Default output root comes from HOMESENSE_OUT.
#[derive(Debug, Parser)]
#[command(name = "homesense", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one trace per bot link plus a checksum manifest.
    Simulate(ScenarioArgs),
    /// Run the distributed pipeline and write events, accounting and coverage.
    Run(RunArgs),
    /// Generate a labelled synthetic feature corpus.
    Corpus(CorpusArgs),
    /// Train a classifier and report leave-one-environment-out metrics.
    Train(TrainArgs),
    /// Leave-one-environment-out metrics without writing a model.
    Eval(EvalArgs),
    /// Score a device from a walk trace and a static trace.
    Qualify(QualifyArgs),
    /// Bandwidth of event-driven ACF upload against raw streaming.
    Account(AccountArgs),
}

fn print_folds(outcome: &commands::EvalOutcome) {
    print!("{}", commands::metrics_csv(&outcome.folds));
    println!(
        "mean accuracy {:.4} false_alarm {:.4} over {} folds",
        outcome.mean.accuracy, outcome.mean.false_alarm_rate, outcome.mean.folds
    );
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => {
            let dir = commands::simulate(&a)?;
            println!("traces written to {}", dir.display());
        }
        Command::Run(a) => {
            let o = commands::run(&a)?;
            let r = &o.report;
            println!(
                "{} events ({} motion, {} alerts, {} human), {} upload bytes, {} skipped trace lines",
                r.events, r.motion_events, r.alerts, r.human_alerts, r.traffic.upload_bytes, r.skipped_trace_lines
            );
            println!("reports written to {}", o.out_dir.display());
        }
        Command::Corpus(a) => {
            let dir = commands::corpus(&a)?;
            println!("corpus written to {}", dir.display());
        }
        Command::Train(a) => {
            let o = commands::train(&a)?;
            print_folds(&o);
            println!("model written to {}", a.out.join("model.json").display());
        }
        Command::Eval(a) => print_folds(&commands::eval(&a)?),
        Command::Qualify(a) => {
            let o = commands::qualify(&a)?;
            println!("{}", o.report.to_json());
        }
        Command::Account(a) => {
            let r = commands::account(&a)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_of(&e) as u8)
        }
    }
}
