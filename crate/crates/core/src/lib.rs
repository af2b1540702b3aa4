//! Spectral toolkit for 2D periodic traveling waves: profile computation,
//! Bloch-Floquet spectra, Whitham modulation systems, averaged-operator
//! construction, Fourier-multiplier decay benchmarks, and side-by-side
//! reaction-diffusion / modulation simulation.

pub mod bloch;
pub mod config;
pub mod field2d;
pub mod model;
pub mod modulation;
pub mod multiplier;
pub mod phase;
pub mod profile;
pub mod report;
pub mod sim;

use thiserror::Error;

/// Unified error type for all toolkit operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid or shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("Newton iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("degenerate wave: {0}")]
    DegenerateWave(String),
    #[error("singular Jacobian in linear solve: {0}")]
    SingularJacobian(String),
    #[error("inconsistent derivative cross-check: {0}")]
    InconsistentDerivative(String),
    #[error("critical spectral cluster merged with stable spectrum: {0}")]
    GapCollapse(String),
    #[error("inconsistent low-frequency expansion: {0}")]
    InconsistentExpansion(String),
    #[error("symmetrizer validation failed: {0}")]
    ValidationFailure(String),
    #[error("eigenvalue branches could not be separated: {0}")]
    ExpansionFailure(String),
    #[error("kernel tail mass exceeds tolerance: {0}")]
    TailMassExceeded(String),
    #[error("degenerate decay fit: {0}")]
    DegenerateFit(String),
    #[error("unsupported norm pair ({0},{1})")]
    UnsupportedNormPair(String, String),
    #[error("phase amplitude too large: {0}")]
    AmplitudeTooLarge(String),
    #[error("fixed-point contraction violated: {0}")]
    ContractionViolated(String),
    #[error("solution blow-up detected: sup norm {0}")]
    BlowupDetected(f64),
    #[error("nonlinear contamination of growth-rate fit: residual {0}")]
    NonlinearContamination(f64),
    #[error("state left modulation validity region: {0}")]
    LeavesValidityRegion(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("input error: {0}")]
    InputError(String),
    #[error("eigensolver failure: {0}")]
    EigSolver(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
