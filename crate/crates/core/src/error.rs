use thiserror::Error;

/// Everything that can go wrong while building or evaluating a two-sphere system.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point coincides with the sphere center; its image lies at infinity")]
    CenterReflection,

    #[error("point is not exterior to the sphere (|p - c| = {distance}, r = {radius})")]
    PointNotExterior { distance: f64, radius: f64 },

    #[error("fixed-point iteration did not converge within {iterations} steps")]
    NoConvergence { iterations: usize },

    #[error("image ladder needs more than {cap} charges; eps is too small for tol = {tol}")]
    TruncationOverflow { cap: usize, tol: f64 },

    #[error("delta = eps/r1 = {delta:e} is below the supported floor {floor:e}; binary64 cannot certify the result")]
    PrecisionRefused { delta: f64, floor: f64 },

    #[error("point lies inside or on conductor D{sphere}")]
    PointInsideConductor { sphere: u8 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("evaluation at a logarithmic pole")]
    EvaluationAtPole,

    #[error("finite-difference stencil of half-width {step} touches a conductor")]
    StepTooLarge { step: f64 },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("model {model} misfits the data: residual {residual} exceeds {threshold}")]
    ModelMismatch {
        model: String,
        residual: f64,
        threshold: f64,
    },

    #[error("declared harmonic field failed the Laplacian spot-check (|lap| = {laplacian:e})")]
    NotHarmonic { laplacian: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
