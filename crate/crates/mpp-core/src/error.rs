use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum MppError {
    InvalidInstance(String),
    InvalidMechanism(String),
    DimensionMismatch(String),
    NonUnichain,
    CapExceeded { needed: usize, cap: usize },
    Infeasible,
    Unbounded,
    NumericalFailure(String),
    NotPersuasive(f64),
    StationarityViolated(f64),
    RegularityFails { action: usize, margin: f64 },
    EpsilonTooLarge { epsilon: f64, threshold: f64 },
    DegenerateGap(f64),
    WitnessVerificationFailed(String),
    NoFeasibleCandidate,
}

impl fmt::Display for MppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MppError::InvalidInstance(m) => write!(f, "invalid instance: {m}"),
            MppError::InvalidMechanism(m) => write!(f, "invalid mechanism: {m}"),
            MppError::DimensionMismatch(m) => write!(f, "dimension mismatch: {m}"),
            MppError::NonUnichain => write!(f, "chain has more than one recurrent class"),
            MppError::CapExceeded { needed, cap } => {
                write!(f, "slice length {needed} exceeds the configured cap {cap}")
            }
            MppError::Infeasible => write!(f, "linear program is infeasible"),
            MppError::Unbounded => write!(f, "linear program is unbounded"),
            MppError::NumericalFailure(m) => write!(f, "numerical failure: {m}"),
            MppError::NotPersuasive(v) => write!(f, "mechanism is not persuasive (violation {v:e})"),
            MppError::StationarityViolated(r) => write!(f, "stationarity violated (residual {r:e})"),
            MppError::RegularityFails { action, margin } => {
                write!(f, "regularity fails for action {action} (margin {margin:e})")
            }
            MppError::EpsilonTooLarge { epsilon, threshold } => {
                write!(f, "epsilon {epsilon} exceeds admissible threshold {threshold}")
            }
            MppError::DegenerateGap(g) => write!(f, "spectral gap {g:e} is degenerate"),
            MppError::WitnessVerificationFailed(m) => write!(f, "witness verification failed: {m}"),
            MppError::NoFeasibleCandidate => write!(f, "no candidate passed the persuasiveness check"),
        }
    }
}

pub type Result<T> = core::result::Result<T, MppError>;
