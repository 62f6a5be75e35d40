use thiserror::Error;

/// Errors raised by the simulation and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: String, expected: String, found: String },

    #[error("out-of-range entry in {what}: {detail}")]
    OutOfRange { what: String, detail: String },

    #[error("non-finite entry in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("depth {depth_um} um outside the axial field of view [0, {fov_um}) um")]
    DepthOutOfRange { depth_um: f64, fov_um: f64 },

    #[error("dense operator too large: {detail}")]
    SizeGuard { detail: String },

    /// Carries the solver state at the point of failure for inspection.
    #[error("solver diverged at iteration {iteration}: relative residual {residual:e}")]
    Divergence {
        iteration: usize,
        residual: f64,
        state: Box<crate::recon::SolverState>,
    },

    #[error("non-finite iterate `{variable}` at iteration {iteration}")]
    NonFiniteIterate { variable: String, iteration: usize },

    #[error("gaussian fit failed: {reason}")]
    FitFailure { reason: String },

    #[error("degenerate metric input: {0}")]
    Degenerate(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: impl std::fmt::Debug, found: impl std::fmt::Debug) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        }
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Whether the failure is numerical (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::NonFiniteIterate { .. } | Error::FitFailure { .. } | Error::Degenerate(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Format { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
