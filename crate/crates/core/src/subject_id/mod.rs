//! Human vs non-human classification of motion windows.
//!
//! Each analysed window becomes a 13-component [`FeatureVector`] (gait and
//! speed statistics plus ACF shape and motion-statistic moments), a linear
//! SVM labels it, and a per-zone [`ConfidenceState`] turns the stream of
//! labels into a 0-99 score.

mod classifier;
mod confidence;
mod corpus;
mod features;

use thiserror::Error;

use crate::channel_sim::SimError;
use crate::foundation::SensingError;

pub use classifier::{classify, train, ClassifierModel, Label, TrainParams, TrainingMeta, MODEL_FORMAT, MODEL_VERSION};
pub use confidence::{vote, ConfidenceState, DEFAULT_ALERT_THRESHOLD, DEFAULT_CONFIDENCE_WINDOW};
pub use corpus::{
    default_environments, environment_channel, generate_corpus, leave_one_environment_out, vary_subject,
    window_features, CorpusSpec, Environment, FoldMetrics, LabeledWindow,
};
pub use features::{
    extract_features, features_of, percentile, prominent_peaks, FeatureVector, ACF_EXTREMUM_PROMINENCE,
    FEATURE_COUNT, FEATURE_NAMES, GAIT_LAG_BAND_S, GAIT_PROMINENCE,
};

#[derive(Debug, Error, PartialEq)]
pub enum SubjectError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training set holds a single class")]
    SingleClass,
    #[error("feature `{feature}` is not finite")]
    NonFinite { feature: &'static str },
    #[error("invalid training parameters: {0}")]
    InvalidParams(String),
    #[error("leave-one-environment-out needs at least 2 environments, got {0}")]
    TooFewFolds(usize),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
}
