//! Error type shared by every module of the engine.

use thiserror::Error;

use crate::solvers::FreqSolution;

pub type Result<T, E = TlmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TlmError {
    #[error("projection {which} is not idempotent (deviation {deviation:.3e})")]
    NotIdempotent { which: &'static str, deviation: f64 },

    #[error("projections are not complementary: {detail} (deviation {deviation:.3e})")]
    NotComplementary { detail: String, deviation: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error(
        "gauge transformation is numerically singular (smallest singular value {sigma_min:.3e})"
    )]
    SingularGauge { sigma_min: f64 },

    #[error("operator must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error(
        "resolvent (e^(j*{theta}) Id - N) is singular (smallest singular value {sigma_min:.3e})"
    )]
    ResolventSingular { theta: f64, sigma_min: f64 },

    #[error("lead coefficient is not invertible on the outgoing subspace: {reason}")]
    NonInvertibleLeadCoefficient { reason: String },

    #[error("model form is invalid: {0}")]
    InvalidModelForm(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("mesh is invalid: {0}")]
    InvalidMesh(String),

    #[error("cell geometry is singular or inverted (det(B) = {det:.6e})")]
    SingularGeometry { det: f64 },

    #[error("characteristic admittance must be positive and finite, got {0}")]
    InvalidAdmittance(f64),

    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),

    #[error("invalid material tensor {name}: {reason}")]
    InvalidMaterial { name: &'static str, reason: String },

    #[error("T+ is singular")]
    SingularTPlus,

    #[error("stub square root outside its domain: spectral radius of N is {spectral_radius:.6}")]
    StubSqrtDomain { spectral_radius: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("velocity {speed:.6e} is not below the speed of light {c0:.6e}")]
    SuperluminalVelocity { speed: f64, c0: f64 },

    #[error("velocity step leaves the admissible domain: |v_next| = {speed:.6e}, c0 = {c0:.6e}")]
    SuperluminalStep { speed: f64, c0: f64 },

    #[error("velocity increment {dv:.6e} exceeds the step gate {limit:.6e}; reduce the time step")]
    VelocityStepTooLarge { dv: f64, limit: f64 },

    #[error("invalid particle parameters: {0}")]
    InvalidParticles(String),

    #[error("state norm {norm:.3e} exceeded the divergence ceiling {ceiling:.3e} at step {step}")]
    DivergenceDetected {
        step: usize,
        norm: f64,
        ceiling: f64,
    },

    #[error("fixed point iteration did not reach the tolerance after {} iterations (residual {:.3e})", .best.iterations, .best.residual)]
    MaxIterExceeded { best: Box<FreqSolution> },

    #[error("incident phasor at the input port group is zero")]
    ZeroIncident,

    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),

    #[error("stability gate rejected cell {cell}: spectral radius {spectral_radius:.6}")]
    Unstable { cell: usize, spectral_radius: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl TlmError {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            TlmError::NotIdempotent { .. } => "NotIdempotent",
            TlmError::NotComplementary { .. } => "NotComplementary",
            TlmError::DimensionMismatch { .. } => "DimensionMismatch",
            TlmError::SingularGauge { .. } => "SingularGauge",
            TlmError::NonSquare { .. } => "NonSquare",
            TlmError::ResolventSingular { .. } => "ResolventSingular",
            TlmError::NonInvertibleLeadCoefficient { .. } => "NonInvertibleLeadCoefficient",
            TlmError::InvalidModelForm(_) => "InvalidModelForm",
            TlmError::LayoutMismatch(_) => "LayoutMismatch",
            TlmError::InvalidMesh(_) => "InvalidMesh",
            TlmError::SingularGeometry { .. } => "SingularGeometry",
            TlmError::InvalidAdmittance(_) => "InvalidAdmittance",
            TlmError::InvalidTimeStep(_) => "InvalidTimeStep",
            TlmError::InvalidMaterial { .. } => "InvalidMaterial",
            TlmError::SingularTPlus => "SingularTPlus",
            TlmError::StubSqrtDomain { .. } => "StubSqrtDomain",
            TlmError::NotPsd { .. } => "NotPSD",
            TlmError::SuperluminalVelocity { .. } => "SuperluminalVelocity",
            TlmError::SuperluminalStep { .. } => "SuperluminalStep",
            TlmError::VelocityStepTooLarge { .. } => "VelocityStepTooLarge",
            TlmError::InvalidParticles(_) => "InvalidParticles",
            TlmError::DivergenceDetected { .. } => "DivergenceDetected",
            TlmError::MaxIterExceeded { .. } => "MaxIterExceeded",
            TlmError::ZeroIncident => "ZeroIncident",
            TlmError::Config(c) => c.kind(),
            TlmError::Unstable { .. } => "Unstable",
            TlmError::Io(_) => "IoError",
            TlmError::Csv(_) => "IoError",
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            TlmError::Config(_) => 2,
            TlmError::Io(_) | TlmError::Csv(_) => 3,
            TlmError::Unstable { .. } | TlmError::StubSqrtDomain { .. } => 4,
            TlmError::MaxIterExceeded { .. } | TlmError::DivergenceDetected { .. } => 5,
            TlmError::InvalidMesh(_) | TlmError::LayoutMismatch(_) => 6,
            _ => 1,
        }
    }
}
