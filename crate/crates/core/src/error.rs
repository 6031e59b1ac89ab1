use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("field shape mismatch: expected {expected:?} nodes, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("field contains a non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("empty field")]
    EmptyField,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("smoothing time could not be bracketed: {0}")]
    BracketFailure(String),

    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("insufficient decay: osc(t_end)/osc(0) = {ratio} (need <= 0.01)")]
    InsufficientDecay { ratio: f64 },

    #[error("y-functional is not decreasing at t = {t}")]
    NonMonotone { t: f64 },

    #[error("oscillation vanishes inside the fitting window at t = {t}")]
    Extinct { t: f64 },

    #[error("trajectory has no field snapshots")]
    MissingSnapshots,

    #[error("Cole-Hopf transform overflows: |a| * osc(mu0) = {0} exceeds 300")]
    Overflow(f64),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
