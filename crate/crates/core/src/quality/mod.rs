//! Sensing-quality verification for a deployed device.
//!
//! Two CSI-level scores (timestamp consistency, amplitude stability) and two
//! application-level scores (motion detection, human classification) are
//! each normalised to 0-100 and blended into a final score; a device
//! qualifies above 60.

mod scores;
mod qualify;

use thiserror::Error;

use crate::foundation::SensingError;
use crate::subject_id::SubjectError;

pub use scores::{
    amplitude_score, timestamp_formula, timestamp_score, AmplitudeScore, TimestampScore, CLIP_SHARE, JITTER_MAX,
    KURTOSIS_SCALE, LOSS_MAX, MIN_FRAMES,
};
pub use qualify::{qualification_test, QualityConfig, QualityReport, QualityWeights, QUALIFY_ABOVE};

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("need at least {need} frames, got {have}")]
    TooFewFrames { have: usize, need: usize },
    #[error("{which} trace spans {got_s:.2} s, expected {expected_s} s +/- 10%")]
    BadDuration { which: &'static str, got_s: f64, expected_s: f64 },
    #[error("invalid quality configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Subject(#[from] SubjectError),
}
