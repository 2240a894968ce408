//! Numerical laboratory for tied-weight ReLU autoencoders trained on signals
//! generated by a sparse code and an incoherent overcomplete dictionary.
//!
//! * [`synth`]: dictionaries, code laws and sample batches.
//! * [`autoencoder`]: forward pass, loss, exact per-row gradient.
//! * [`support`]: support recovery by the ReLU layer.
//! * [`landscape`]: gradient norms near the dictionary and loss scans.
//! * [`proxy`]: the support-gated proxy gradient and its closed-form
//!   `alpha W_i - beta A*_i + e_i` decomposition.
//! * [`harness`]: experiment configuration, registry and file outputs.

pub mod autoencoder;
pub mod error;
pub mod format;
pub mod gradcheck;
pub mod harness;
pub mod landscape;
pub mod proxy;
pub mod reduce;
pub mod rng;
pub mod support;
pub mod synth;

pub use error::{Error, Result};
