//! Dirichlet process Gaussian mixture clustering of frame-level features
//! into pseudo-phone labels.

mod niw;
mod sampler;

pub use niw::{
    log_predictive, marginal_log_likelihood, posterior, GaussStats, NiwPrior, REGULARIZATION,
};
pub use sampler::{fit, fit_with_assignments, predict, DpgmmState};

#[derive(Debug, thiserror::Error)]
pub enum DpgmmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type DpgmmResult<T> = Result<T, DpgmmError>;

#[derive(Debug, Clone)]
pub struct DpgmmConfig {
    /// DP concentration parameter.
    pub concentration: f64,
    /// None derives an empirical prior from the data (mean, diagonal
    /// covariance, nu0 = dim + 3).
    pub prior: Option<NiwPrior>,
    pub iterations: usize,
    pub shards: usize,
    pub seed: u64,
    pub split_merge_enabled: bool,
}

impl Default for DpgmmConfig {
    fn default() -> Self {
        DpgmmConfig {
            concentration: 1.0,
            prior: None,
            iterations: 50,
            shards: 4,
            seed: 0,
            split_merge_enabled: true,
        }
    }
}

impl DpgmmConfig {
    pub fn validate(&self) -> DpgmmResult<()> {
        if self.concentration <= 0.0 {
            return Err(DpgmmError::InvalidConfig("concentration must be > 0".into()));
        }
        if self.iterations == 0 {
            return Err(DpgmmError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.shards == 0 {
            return Err(DpgmmError::InvalidConfig("shards must be >= 1".into()));
        }
        Ok(())
    }
}
