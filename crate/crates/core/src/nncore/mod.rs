//! Minimal neural computation core: a define-by-run autodiff graph over 2-D
//! f64 tensors, dense and LSTM layers, diagonal-Gaussian utilities, Adam,
//! finite-difference gradient checking, and checkpoint I/O.
//!
//! Training math runs in f64 so gradient checks stay sharp; archived
//! features remain f32 at the corpus boundary.

mod adam;
mod checkpoint;
mod gaussian;
mod gradcheck;
pub mod graph;
mod layers;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gaussian::{
    diag_gaussian_kl, diag_gaussian_log_prob, graph_kl_to_isotropic, graph_log_prob,
    graph_reparam, reparam_sample, DiagGaussian, LN_2PI, LOG_VAR_RANGE,
};
pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_STEP};
pub use graph::{Gradients, Graph, NodeId};
pub use layers::{dense, init_dense, init_lstm, lstm, lstm_forward, xavier, ParamNodes, ParamSet};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("{op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Divergence(String),
    #[error("missing parameter '{0}'")]
    MissingParam(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type NnResult<T> = Result<T, NnError>;
