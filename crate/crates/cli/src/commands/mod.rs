mod device;
mod learn;
mod run;

pub use device::{account, account_report, qualify, AccountArgs, AccountReport, QualifyArgs, QualifyOutcome};
pub use learn::{
    corpus, eval, mean_metrics, metrics_csv, read_corpus, train, CorpusArgs, EvalArgs, EvalOutcome, MeanMetrics,
    TrainArgs, FEATURES_FILE,
};
pub use run::{run, simulate, Check, RunArgs, RunOutcome, RunReport, ScenarioArgs, CACHE_ENV};
