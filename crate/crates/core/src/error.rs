use thiserror::Error;

/// Errors raised across the synthesis, estimation and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("uncertainty enumeration limit exceeded: n_p = {n_p} > {limit}")]
    EnumerationLimit { n_p: usize, limit: usize },

    #[error("malformed LMI problem: {0}")]
    MalformedProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("barrier pair synthesis infeasible on all {} grid points", .attempts.len())]
    SynthesisInfeasible { attempts: Vec<GridAttempt> },

    #[error("controller recovery failed: {0}")]
    Recovery(String),

    #[error("certificate verification failed: {failing:?}")]
    VerificationFailed { failing: Vec<String> },

    #[error("estimator design infeasible on all {points} multiplier values")]
    DesignInfeasible { points: usize },

    #[error("estimator filter matrix A_z is not Hurwitz (max real part {max_real})")]
    NotHurwitz { max_real: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("simulation diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

/// Outcome of one multiplier grid point during synthesis.
#[derive(Debug, Clone)]
pub struct GridAttempt {
    pub mu_w: f64,
    pub mu_p: Vec<f64>,
    pub status: String,
}

pub type Result<T> = std::result::Result<T, Error>;
