//! Zero-resource subword modeling toolkit.
//!
//! Learns frame-level speech representations that are phonetically
//! discriminative and speaker-invariant, from untranscribed audio only:
//!
//! - [`corpus`] — dataset manifests, portable feature/label archives, and a
//!   synthetic speech-like corpus generator with known ground truth.
//! - [`frontend`] — MFCC extraction, delta appending, per-speaker cepstral
//!   mean normalization, fixed-length segmentation.
//! - [`nncore`] — tensors, reverse-mode autodiff, dense/LSTM layers,
//!   diagonal-Gaussian utilities, Adam, gradient checking.
//! - [`fhvae`] — factorized hierarchical VAE: disentangles segment-level
//!   (linguistic) and sequence-level (speaker) factors; s-vector table,
//!   latent extraction, and s-vector-unified reconstruction.
//! - [`dpgmm`] — Dirichlet process Gaussian mixture clustering of frames
//!   into pseudo-phone labels via a sub-cluster split/merge sampler.
//! - [`bnf`] — multilingual bottleneck DNN trained on cluster labels with
//!   multi-task learning; bottleneck features are the final representation.
//! - [`abx`] — ABX discriminability evaluation with DTW distances.
//! - [`metrics`] — clustering/classification quality measures used to
//!   validate representations against synthetic ground truth.

pub mod abx;
pub mod bnf;
pub mod corpus;
pub mod dpgmm;
pub mod fhvae;
pub mod frontend;
pub mod metrics;
pub mod nncore;
