use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpxError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix {name} is not symmetric (max deviation {deviation:e})")]
    Asymmetric { name: String, deviation: f64 },

    #[error("momentum block of the Hamiltonian is singular at t = {t}")]
    SingularMomentumBlock { t: f64 },

    #[error("non-positive squared frequency {name} = {value}")]
    NonPositiveFrequency { name: &'static str, value: f64 },

    #[error("resonance: {0}")]
    Resonance(String),

    #[error("integrator failure at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("state not resolved on its grid: {0}")]
    TailMass(String),

    #[error("spectral tail too large (aliasing): {0}")]
    Aliasing(String),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("caustic at t = {t} (|det λ3| = {det:e}); split the interval")]
    Caustic { t: f64, det: f64 },

    #[error("cannot build a caustic-free evolution plan: {0}")]
    Unresolvable(String),

    #[error("trajectory does not cover t = {t}")]
    TrajectoryGap { t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("oracle instability: {0}")]
    Instability(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GpxError>;
