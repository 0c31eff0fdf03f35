//! Classical simulator and verification harness for nondestructive, unbiased
//! quantum estimators.
//!
//! The crate is layered bottom-up:
//!
//! - [`qcore`]: seeded randomness, dense complex linear algebra, projective
//!   measurement and unitary eigendecomposition.
//! - [`phase`]: phase-estimation output distribution, fixed-point bit
//!   arithmetic and the unbiased phase estimator [`phase::upe`].
//! - [`amplitude`]: nondestructive coin flips, amplitude estimation with
//!   amplified uncomputation, and the unbiased amplitude estimator
//!   [`amplitude::nduae`].
//! - [`mean`]: finite random variables, the unbiased mean estimator, the
//!   median estimator, probabilistic annealing and the product estimator.
//! - [`gibbs`]: enumerable Gibbs models, Glauber chains, spectral gaps and
//!   Szegedy walks.
//! - [`pipeline`]: cooling schedules, partition-function estimation, the
//!   classical baseline, reports and configuration.
//! - [`suite`]: the acceptance criteria as runnable checks.
//!
//! Every quantum subroutine acting on an exact eigenvector or inside a
//! two-dimensional Grover plane is simulated by its exact outcome law, so
//! Monte Carlo contracts over 10⁵ repetitions stay cheap.

pub mod amplitude;
pub mod gibbs;
pub mod mean;
pub mod phase;
pub mod pipeline;
pub mod qcore;
pub mod stats;
pub mod suite;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not {0} within tolerance")]
    NotTagged(&'static str),
    #[error("dimension {0} exceeds the dense cap")]
    CapExceeded(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid random variable: {0}")]
    InvalidVariable(String),
    #[error("averaged table exceeds {cap} atoms; lower the averaging constant scale")]
    AveragingCap { cap: usize },
    #[error("schedule generation failed: {0}")]
    Schedule(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("configuration error in {path}: {message}")]
    Config { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
