use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid solver settings: {0}")]
    Settings(&'static str),
    #[error("step limit of {max_steps} exceeded at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("not exponentially stable on sampled data: {0}")]
    NotExponentiallyStable(String),
    #[error("integral gain is not symmetric (relative asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("integral gain is not positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("degenerate input matrix at t = {t}: normalising eigenvalue {value:e} below floor")]
    DegenerateInput { t: f64, value: f64 },
    #[error("transmission zero at origin / singular dc-gain: rank {rank} < {required}")]
    SingularDcGain { rank: usize, required: usize },
    #[error("singular matrix: {0}")]
    Singular(&'static str),
    #[error("nominal closed loop is not Hurwitz (largest real part {0})")]
    NotHurwitz(f64),
    #[error("invalid bounds: {0}")]
    InvalidBounds(&'static str),
    #[error("invalid argument: {0}")]
    Invalid(String),
}
