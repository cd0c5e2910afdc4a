//! Exit status classification.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | usage error (bad flags, reported by the argument parser) |
//! | 2 | validation: the scenario, model or corpus is malformed |
//! | 3 | runtime: I/O or a failure while executing |
//! | 4 | acceptance: the run finished but an invariant check failed |

use thiserror::Error;

pub const SUCCESS: i32 = 0;
pub const VALIDATION: i32 = 2;
pub const RUNTIME: i32 = 3;
pub const ACCEPTANCE: i32 = 4;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ValidationError(pub String);

#[derive(Debug, Error)]
#[error("acceptance failed: {0}")]
pub struct AcceptanceFailure(pub String);

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ValidationError(msg.into()).into()
}

pub fn code_of(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ValidationError>() {
            return VALIDATION;
        }
        if cause.is::<AcceptanceFailure>() {
            return ACCEPTANCE;
        }
    }
    RUNTIME
}
