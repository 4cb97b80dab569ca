use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {n} is outside the domain (first valid index {start})")]
    Domain { n: u64, start: u64 },

    #[error("index {n} exceeds horizon {horizon}")]
    BeyondHorizon { n: u64, horizon: u64 },

    #[error("degenerate interval [{m}, {n}]: weight difference is zero")]
    DegenerateInterval { m: u64, n: u64 },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("function `{name}` is not certified in class F_{ell}: {reason}")]
    Uncertified { name: String, ell: usize, reason: String },

    #[error("construction hypothesis violated at index {index}: {hypothesis}")]
    Hypothesis { hypothesis: String, index: u64 },

    #[error("identity check failed at index {index}: lhs {lhs}, rhs {rhs}")]
    Identity { index: u64, lhs: f64, rhs: f64 },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("overflow guard tripped at N = {index}: exponent {exponent} exceeds 700, use a smaller horizon")]
    Overflow { index: u64, exponent: f64 },

    #[error("shift {shift} leaves no admissible starting point below {n_max}")]
    RangeExhausted { shift: u64, n_max: u64 },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
