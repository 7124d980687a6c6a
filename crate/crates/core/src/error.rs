use num_complex::Complex64;
use thiserror::Error;

use crate::wadc::ControlDesign;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no equilibrium found after {iterations} Newton iterations (mismatch {residual:.3e} pu)")]
    NoEquilibrium { iterations: usize, residual: f64 },

    #[error("singular power-flow Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("simulation diverged at step {step}: |x|_inf = {norm:.3e}")]
    UnstableSimulation { step: usize, norm: f64 },

    #[error("insufficient data: {samples} samples, need at least {required}")]
    InsufficientData { samples: usize, required: usize },

    #[error("angle covariance is ill-conditioned (condition number {condition:.3e})")]
    IllConditionedCovariance { condition: f64 },

    #[error("no stationary covariance: mode {eigenvalue} is excited and not asymptotically stable")]
    NoStationaryCovariance { eigenvalue: Complex64 },

    #[error("matrix is defective near eigenvalues {cluster:?}")]
    DefectiveMatrix { cluster: Vec<Complex64> },

    #[error("eigenvector gauge error: {0}")]
    Gauge(String),

    #[error("no generator set in G_A meets the damping targets")]
    NoFeasibleDesign { best: Box<ControlDesign> },

    #[error("no generator is available for control")]
    EmptyActuatorSet,

    #[error("eigendecomposition failed to converge")]
    EigenSolver,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {format} in {path}: {message}")]
    Parse {
        format: &'static str,
        path: String,
        message: String,
    },
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NoEquilibrium { .. } => "no_equilibrium",
            Error::SingularJacobian { .. } => "singular_jacobian",
            Error::UnstableSimulation { .. } => "unstable_simulation",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::IllConditionedCovariance { .. } => "ill_conditioned_covariance",
            Error::NoStationaryCovariance { .. } => "no_stationary_covariance",
            Error::DefectiveMatrix { .. } => "defective_matrix",
            Error::Gauge(_) => "gauge",
            Error::NoFeasibleDesign { .. } => "no_feasible_design",
            Error::EmptyActuatorSet => "empty_actuator_set",
            Error::EigenSolver => "eigen_solver",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(
        format: &'static str,
        path: impl AsRef<std::path::Path>,
        message: impl ToString,
    ) -> Self {
        Error::Parse {
            format,
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
