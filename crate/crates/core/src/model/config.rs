use serde::{Deserialize, Serialize};

use crate::error::{PpmError, Result};
use crate::numerics::PriorFamily;

/// Shapes and switches of the forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// History length `H` in steps.
    pub history: usize,
    /// Forecast horizon `L` in steps.
    pub horizon: usize,
    /// Channel count `C`.
    pub channels: usize,
    /// Latent dimension `D` per channel.
    pub latent_dim: usize,
    /// Encoder hidden width.
    pub hidden: usize,
    /// Mapper hidden width; the encoder width when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapper_hidden: Option<usize>,
    #[serde(default)]
    pub prior: PriorFamily,
    /// Replace the learned scale by a constant. `Some(1.0)` is the
    /// fixed-unit-variance ablation; `Some(0.0)` collapses the prior onto its
    /// mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_sigma: Option<f64>,
}

impl ModelConfig {
    /// Defaults for a given shape: `D = L` and hidden width 256.
    pub fn new(history: usize, horizon: usize, channels: usize) -> Self {
        ModelConfig {
            history,
            horizon,
            channels,
            latent_dim: horizon,
            hidden: 256,
            mapper_hidden: None,
            prior: PriorFamily::Gaussian,
            fixed_sigma: None,
        }
    }

    pub fn mapper_width(&self) -> usize {
        self.mapper_hidden.unwrap_or(self.hidden)
    }

    pub fn fixed_unit_sigma(&self) -> bool {
        self.fixed_sigma == Some(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("history", self.history),
            ("horizon", self.horizon),
            ("channels", self.channels),
            ("latent_dim", self.latent_dim),
            ("hidden", self.hidden),
            ("mapper_hidden", self.mapper_width()),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(PpmError::Config(format!("{name} must be at least 1")));
            }
        }
        if let Some(s) = self.fixed_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(PpmError::Config(format!("fixed_sigma must be >= 0, got {s}")));
            }
        }
        self.prior.validate()
    }
}
