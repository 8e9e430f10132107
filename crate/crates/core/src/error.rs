use std::fmt;

use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

/// Which part of the toolkit raised an error. Reported alongside task failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Module {
    Algebra,
    PhaseSpace,
    DeDonderWeyl,
    FieldSolver,
    HamiltonJacobi,
    Scenario,
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Module::Algebra => "multivector_algebra",
            Module::PhaseSpace => "phase_space",
            Module::DeDonderWeyl => "dedonder_weyl",
            Module::FieldSolver => "field_solver",
            Module::HamiltonJacobi => "hamilton_jacobi",
            Module::Scenario => "scenario",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("chart mismatch: dimension {left} vs {right}")]
    ChartMismatch { left: usize, right: usize },

    #[error("degree overflow: {left} + {right} exceeds chart dimension {dim}")]
    DegreeOverflow { left: usize, right: usize, dim: usize },

    #[error("cannot contract a {vector}-vector into a {form}-form")]
    ContractionDegree { vector: usize, form: usize },

    #[error("degree mismatch: expected {expected}, got {actual}")]
    DegreeMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("gauge is not trace-free: trace {trace:e} for field component {component}")]
    GaugeTrace { component: usize, trace: f64 },

    #[error("singular Legendre map: Newton did not converge after {iterations} iterations (residual {residual:e})")]
    Singular { iterations: usize, residual: f64 },

    #[error("numerical divergence at t = {t}")]
    Divergence { t: f64 },

    #[error("node {0:?} lies on the patch boundary")]
    BoundaryNode(Vec<usize>),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{module}: {source}")]
    InModule {
        module: Module,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_module(self, module: Module) -> Error {
        match self {
            e @ Error::InModule { .. } => e,
            e => Error::InModule {
                module,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, skipping provenance wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InModule { source, .. } | Error::AtTime { source, .. } => source.root(),
            e => e,
        }
    }
}
