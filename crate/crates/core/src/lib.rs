//! Probabilistic multivariate forecasting by parametric prior mapping.
//!
//! An encoder reads each channel's history and emits the location and scale
//! of a factorized latent prior. Reparameterized draws from that prior are
//! pushed through a small learned map, and the resulting ensemble is the
//! predictive distribution. Training minimizes a log-truncated kernel density
//! negative log-likelihood plus a squared error on the ensemble mean, with all
//! gradients written out by hand.
//!
//! Module map:
//! - [`numerics`]: tensors, samplers, layers with explicit backward passes
//! - [`model`]: encoder, prior sampling, push-forward map, checkpoints
//! - [`objective`]: KDE likelihood, mean anchor, sample gradients
//! - [`trainer`]: Adam, early stopping, the training loop
//! - [`metrics`]: CRPS, QICE, MSE/MAE
//! - [`data`]: CSV ingestion, normalization, windows, synthetic series
//! - [`diagnostics`]: empirical checks of the finite-sample error law and of
//!   push-forward expressiveness

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod trainer;

pub use error::{PpmError, Result};
