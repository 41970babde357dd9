//! Label-noise-robust training toolkit.
//!
//! The crate trains a small softmax classifier on datasets whose labels have
//! been corrupted by a stochastic process, using loss corrections driven by a
//! column-stochastic transition matrix `T[noisy, true]`:
//!
//! - [`loss`] — log, unhinged, backward-corrected, forward-corrected, and
//!   skeptical losses, plus the magnification function that links the
//!   skeptical gradient to forward correction.
//! - [`transition`] — transition matrices, the confidence-gated online
//!   estimator, and empirical estimation from paired label vectors.
//! - [`noise`] — symmetric and confusing (model-driven top-2) label noise
//!   generators with exact flip counts.
//! - [`oracle`] — exhaustive verification of the distribution-correction
//!   identities on small finite generative models.
//! - [`network`] — a minimal fully connected softmax classifier with SGD
//!   momentum and Adam.
//! - [`metrics`] — accuracy and label-recovery precision/recall.
//! - [`io`] — IDX loading, synthetic cluster datasets, and noisy-label
//!   sidecar files.
//! - [`train`] — the end-to-end training loop, including the online
//!   transition-estimation schedule for the skeptical loss.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the scalar for the common case.

pub mod dataset;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod noise;
pub mod oracle;
pub mod scalar;
pub mod train;
pub mod transition;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases. The CLI and the verification suites run at f64.
pub type LabeledDataset64 = dataset::LabeledDataset<f64>;
pub type NetworkState64 = network::NetworkState<f64>;
pub type TransitionMatrix64 = transition::TransitionMatrix<f64>;
pub type DiscreteJointModel64 = oracle::DiscreteJointModel<f64>;
pub type LossKind64 = loss::LossKind<f64>;

/// Single-precision aliases.
pub type LabeledDataset32 = dataset::LabeledDataset<f32>;
pub type NetworkState32 = network::NetworkState<f32>;
pub type TransitionMatrix32 = transition::TransitionMatrix<f32>;
