//! Calibration-free sensing core.
//!
//! Power responses `|H|^2` go into a rolling [`PowerWindow`]; from it we take
//! the biased per-subcarrier ACF, combine subcarriers by maximal ratio
//! combining, test the first-lag motion statistic against `eta`, and read
//! speed off the first peak of the ACF differential. Nothing here looks at
//! CSI phase.

mod acf;
mod bessel;
mod sensing;
mod speed;
mod window;

use thiserror::Error;

pub use acf::{
    acf_of_series, combine_mrc, combine_uniform, compute_acf, compute_acf_recent, motion_statistic,
    motion_statistic_with, sample_acf, AcfCurve, Combined, MotionDecision, Threshold, Verdict, DEGENERATE_EPS, Z_99,
};
pub use bessel::{bessel_j0, bessel_j01, bessel_j1, calibrate_x0, BESSEL_X0};
pub use sensing::{analyze_window, SensingConfig, WindowAnalysis, WindowOutcome, WindowRecord, WindowedSensor};
pub use speed::{estimate_speed, estimate_speed_with, SpeedConfig, SpeedEntry, SpeedTrace, PROMINENCE_FLOOR, SMOOTHING_TAPS};
pub use window::{PowerWindow, RunningStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("invalid sensing configuration: {0}")]
    InvalidConfig(String),
    #[error("frame {sequence} has non-finite gains")]
    NonFiniteFrame { sequence: u32 },
    #[error("timestamp went backwards: {got} after {previous}")]
    OutOfOrder { previous: f64, got: f64 },
    #[error("expected {expected} subcarriers, got {got}")]
    SubcarrierMismatch { expected: usize, got: usize },
    #[error("window holds {have} samples, need at least {need}")]
    WindowTooShort { have: usize, need: usize },
    #[error("max lag {max_lag_s} s exceeds half the window span {span_s} s")]
    LagTooLarge { max_lag_s: f64, span_s: f64 },
}
