//! The forecaster: a per-channel encoder that emits a latent prior, the
//! reparameterized sampler, and a shared map from latents to trajectories.

mod checkpoint;
mod config;
mod network;
mod params;

pub use checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use network::{sample_prior, CallCounters, ForecastEnsemble, PpmModel, PriorParams, SIGMA_FLOOR};
pub use params::ParamStore;

pub(crate) use network::{mlp_backward, mlp_forward};
pub(crate) use params::push_mlp;
