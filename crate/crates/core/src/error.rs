use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric or structural input violates its declared bounds.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate deformation: det F = {min_det:.6e} at element {element}, quadrature point {point}")]
    DegenerateDeformation {
        min_det: f64,
        element: usize,
        point: usize,
    },

    #[error("degenerate magnetization at node {node}")]
    DegenerateMagnetization { node: usize },

    #[error("deformed body leaves the box: point {point:?} outside [{lower:?}, {upper:?}]")]
    BoxOverflow {
        point: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },

    #[error("field/mesh mismatch: {0}")]
    Mismatch(String),

    #[error("time {t} outside the load knots [{start}, {end}]")]
    LoadTime { t: f64, start: f64, end: f64 },

    #[error("conjugate gradients did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    PoissonNotConverged { iterations: usize, residual: f64 },

    #[error("line search collapsed at iteration {iteration} (gradient norm {gradient_norm:.3e})")]
    LineSearchCollapse {
        iteration: usize,
        gradient_norm: f64,
    },

    #[error("incompressibility continuation failed: max |det F - 1| = {residual:.3e} at kappa = {kappa:.3e}")]
    Continuation { residual: f64, kappa: f64 },

    #[error("step {step} at t = {t} rejected: {source}")]
    StepRejected {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("initial state is not stable: residual {residual:.3e} below -{tolerance:.3e}")]
    UnstableInitialState { residual: f64, tolerance: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical solvers (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDeformation { .. }
                | Error::DegenerateMagnetization { .. }
                | Error::BoxOverflow { .. }
                | Error::PoissonNotConverged { .. }
                | Error::LineSearchCollapse { .. }
                | Error::Continuation { .. }
                | Error::StepRejected { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
