use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("the delta kernel has no pointwise value; it only acts inside a convolution")]
    DeltaPointwise,

    #[error("eigensolver failed to converge (residual {residual:.3e})")]
    EigenNoConvergence { residual: f64 },

    #[error("degenerate eigenvalues {0} and {1}")]
    DegenerateSpectrum(f64, f64),

    #[error("|z| = {z} hits the coordinate singularity of the phase equation")]
    Singularity { z: f64 },

    #[error("orbit reached |z| = 1 at t = {t}")]
    OrbitSingularity { t: f64 },

    #[error("orbit Hamiltonian drift {drift:.3e} exceeds tolerance after {halvings} step halvings")]
    HamiltonianDrift { drift: f64, halvings: usize },

    #[error("state is not a fixed point (residual {0:.3e})")]
    NotFixedPoint(f64),

    #[error("Newton iteration did not converge after {} iterations (last residual {:.3e})", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    NewtonFailed { history: Vec<f64> },

    #[error("Newton iteration collapsed to the trivial solution (N = {norm:.3e})")]
    TrivialSolution { norm: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("continuation aborted after {steps} steps: {reason}")]
    ContinuationAborted { steps: usize, reason: String },

    #[error("norm drift {drift:.3e} at t = {t}")]
    NormDrift { t: f64, drift: f64 },

    #[error("non-finite field at t = {t}")]
    NonFinite { t: f64 },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::DeltaPointwise => "delta_pointwise",
            Error::EigenNoConvergence { .. } => "eigen_no_convergence",
            Error::DegenerateSpectrum(..) => "degenerate_spectrum",
            Error::Singularity { .. } => "singularity",
            Error::OrbitSingularity { .. } => "orbit_singularity",
            Error::HamiltonianDrift { .. } => "hamiltonian_drift",
            Error::NotFixedPoint(_) => "not_fixed_point",
            Error::NewtonFailed { .. } => "newton_failed",
            Error::TrivialSolution { .. } => "trivial_solution",
            Error::Singular => "singular",
            Error::ContinuationAborted { .. } => "continuation_aborted",
            Error::NormDrift { .. } => "norm_drift",
            Error::NonFinite { .. } => "non_finite",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
