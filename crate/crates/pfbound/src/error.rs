//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameter vector has the wrong dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// KLE characteristic-equation root could not be bracketed.
    #[error("KLE eigenpair construction failed for mode {mode}: no sign change in bracket")]
    KleRoot { mode: usize },

    /// Coefficient non-positive at a quadrature point.
    #[error("ellipticity violated: a({x}) = {value} <= 0")]
    Ellipticity { x: f64, value: f64 },

    /// Stiffness matrix not positive definite.
    #[error("assembly error: stiffness matrix is singular or indefinite (pivot {pivot} at row {row})")]
    AssemblySingular { row: usize, pivot: f64 },

    /// Crank-Nicolson update hits the pole 1 + h*u/2 = 0.
    #[error("time-stepping singularity: 1 + h*u/2 = 0 at u = {u}, h = {h}")]
    SteppingSingularity { u: f64, h: f64 },

    /// Finite-difference stencil produced a non-finite value.
    #[error("gradient error: non-finite limit-state value at finite-difference stencil point")]
    Gradient,

    /// FORM requires a safe origin.
    #[error("FORM precondition violated: G(0) = {g0} <= 0")]
    UnsafeOrigin { g0: f64 },

    /// Gradient vanished where the analysis needs it.
    #[error("degenerate gradient: ||grad G|| = 0 at the evaluation point")]
    DegenerateGradient,

    /// Mesh size too coarse for the bound to be defined.
    #[error("h too large for bound validity: need h < {max_h} (beta = {beta}, C_FE = {c_fe}, s = {s})")]
    HTooLarge { max_h: f64, beta: f64, c_fe: f64, s: f64 },

    /// Iteration failed to converge.
    #[error("convergence failure: {0}")]
    NonConvergence(String),

    /// Order fit needs at least two usable points.
    #[error("order fit error: {0}")]
    Fit(String),

    /// Error with experiment level/stage context attached.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn stage(stage: impl Into<String>, source: Error) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(source),
        }
    }
}
