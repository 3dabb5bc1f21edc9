//! Dynamic noise reduction replicator (DNRR).
//!
//! Given a chaotic time series corrupted by additive dynamical noise of
//! unknown, possibly heavy-tailed density, the DNRR sampler jointly
//! reconstructs the deterministic polynomial map, estimates the noise
//! density as a countable Gaussian mixture with geometric stick-breaking
//! weights, and samples a noise-reduced shadow trajectory evolving near
//! the observed one.
//!
//! The crate is organized around the sampler pipeline:
//!
//! * [`dynamics`] — polynomial delay maps, finite Gaussian mixture noise,
//!   trajectory simulation and serialization.
//! * [`gsbr`] — reconstruction-stage Gibbs updates (geometric weights,
//!   allocations, precisions, map coefficients, initial conditions).
//! * [`replicator`] — noise-reduction stage: per-site Metropolis-within-Gibbs
//!   updates of the shadow trajectory and the replication precision.
//! * [`orchestrator`] — the blocked Gibbs loop, chain storage and persistence.
//! * [`estimation`] — posterior summaries: dip test, KDE/MAP, HPD intervals,
//!   forecastability.
//! * [`metrics`] — scalar noise-reduction measures (E0, Edyn, Rdyn, eta,
//!   tail flatness, PARE).
//! * [`cli`] — command line front end used by the `dnrr` binary.

pub mod cli;
pub mod dynamics;
pub mod estimation;
pub mod gsbr;
pub mod metrics;
pub mod orchestrator;
pub mod replicator;

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("design matrix is rank deficient; the weighted normal equations are singular")]
    RankDeficient,

    #[error("no bounded realization at this noise level after {retries} restarts")]
    RetryExhausted { retries: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error at line {line} of {path}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::DimensionMismatch { .. } => 2,
            Error::RankDeficient | Error::RetryExhausted { .. } | Error::Numeric(_) => 3,
            Error::Parse { .. } | Error::MissingFile(_) | Error::Io(_) => 4,
        }
    }
}
