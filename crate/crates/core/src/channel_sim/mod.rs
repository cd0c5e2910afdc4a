//! Synthetic CSI generator with a known ground truth.
//!
//! Every trace is produced from an explicit seed, so the motion state,
//! speed, subject type, energy ratio and impairments behind a frame are
//! always known to the caller. Power responses follow the static Gaussian
//! model plus a sum-of-scatterers dynamic term whose power ACF is
//! `E_d^2 / (E_d^2 + sigma^2) * J0(k v tau)`.

mod config;
mod frame;
mod generate;
mod subject;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{
    attenuate_for_distance, ChannelConfig, ImpairmentConfig, DEFAULT_PATHS, DEFAULT_PATH_LOSS_EXPONENT,
    DEFAULT_RATIO_CENTER_DB, DEFAULT_RATIO_SPREAD_DB, DEFAULT_SAMPLE_RATE_HZ, DEFAULT_SUBCARRIERS,
    DEFAULT_WAVELENGTH_M,
};
pub use frame::{
    decode_frame_binary, decode_frame_text, encode_frame_binary, encode_frame_text, read_trace_text,
    write_trace_text, CsiFrame, TraceReadReport, BINARY_BYTES_PER_GAIN, BINARY_FRAME_HEADER_BYTES,
};
pub use generate::{generate_mixture, generate_schedule, generate_trace, MixtureComponent, Segment};
pub use subject::{speed_waveform, SubjectKind, SubjectProfile, HUMAN_GAIT_DEPTH, PET_GAIT_DEPTH};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("duration must be finite and > 0, got {0}")]
    InvalidDuration(f64),
    #[error("distance must be finite and > 0, got {0}")]
    InvalidDistance(f64),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
}

pub(crate) const STREAM_RATIO_SPREAD: u64 = 1;
pub(crate) const STREAM_SCATTERERS: u64 = 2;
pub(crate) const STREAM_NOISE: u64 = 3;
pub(crate) const STREAM_SPEED: u64 = 4;
pub(crate) const STREAM_LOSS: u64 = 5;
pub(crate) const STREAM_JITTER: u64 = 6;
pub(crate) const STREAM_PHASE: u64 = 7;

/// Independent ChaCha stream per concern, so that e.g. enabling packet loss
/// never perturbs the noise draws.
pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed; `derive_seed(s, 0) == s`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
