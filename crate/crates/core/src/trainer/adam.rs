use serde::{Deserialize, Serialize};

use crate::error::{PpmError, Result};
use crate::model::ParamStore;
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "beta1")]
    pub beta1: f64,
    #[serde(default = "beta2")]
    pub beta2: f64,
    #[serde(default = "eps")]
    pub eps: f64,
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: beta1(),
            beta2: beta2(),
            eps: eps(),
        }
    }
}

/// Adam with bias correction. Moments are shaped after the store passed to
/// [`Adam::new`].
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(params: &ParamStore, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// One update from the store's gradient buffer, which is zeroed after.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64) -> Result<()> {
        if self.m.len() != params.len()
            || self.m.iter().zip(params.values()).any(|(m, p)| m.shape() != p.shape())
        {
            return Err(PpmError::InvalidArgument(
                "optimizer moments were not initialized for this parameter store".into(),
            ));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let (values, grads) = params.split_mut();
        for (((p, g), m), v) in values.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        params.zero_grad();
        Ok(())
    }
}
