use alloc::string::String;

/// Errors raised by the solvers, oracles and learning algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("solver stopped after {iterations} pivots with duality gap {gap:e} above tolerance {tol:e}")]
    ToleranceNotMet { iterations: usize, gap: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("step {step} is outside 0..{horizon}")]
    BadStep { step: usize, horizon: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid value function: {0}")]
    InvalidFunction(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("function class is empty")]
    EmptyClass,
    #[error("confidence set is empty at episode {episode}")]
    EmptyConfidenceSet { episode: usize },
    #[error("dataset for step {step} is empty")]
    EmptyDataset { step: usize },
    #[error("every function was eliminated by phase {phase}")]
    EmptySurvivorSet { phase: usize },
    #[error("no termination within {phases} phases")]
    Exhausted { phases: usize },
    #[error("{what} has size {size}, above the cap of {cap}")]
    TooLarge { what: &'static str, size: usize, cap: usize },
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type Result<T> = core::result::Result<T, Error>;
