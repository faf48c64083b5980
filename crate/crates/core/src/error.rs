//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CeError {
    #[error("grid axis {axis}: {reason}")]
    InvalidGrid { axis: &'static str, reason: String },

    #[error("input `{which}` not normalized: measured norm {norm:.12e} (relative error {rel_err:.3e})")]
    NotNormalized {
        which: String,
        norm: f64,
        rel_err: f64,
    },

    #[error("tail mass {mass:.3e} outside grid on axis {axis} exceeds {limit:.1e}")]
    TailMass {
        axis: &'static str,
        mass: f64,
        limit: f64,
    },

    #[error("zero-probability conditioning at x = {x}: P(x) = {p:.3e} below threshold {threshold:.3e}")]
    ZeroProbabilityConditioning { x: f64, p: f64, threshold: f64 },

    #[error("momentum range truncation: lost mass {lost:.3e} exceeds {limit:.1e}")]
    MomentumTruncation { lost: f64, limit: f64 },

    #[error("support escape under flow: lost mass {lost:.3e} exceeds {limit:.1e}")]
    SupportEscape { lost: f64, limit: f64 },

    #[error("spectral aliasing on axis {axis}: tail mass {mass:.3e} exceeds {limit:.1e}")]
    Aliasing {
        axis: &'static str,
        mass: f64,
        limit: f64,
    },

    #[error("operator not Hermitian: anti-Hermitian norm {norm:.3e}")]
    NotHermitian { norm: f64 },

    #[error("hermiticity violation: imaginary residue {residue:.3e} in {context}")]
    ImaginaryResidue { residue: f64, context: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("observable acts on the wrong particle: {0}")]
    WrongParticle(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CeError>;
