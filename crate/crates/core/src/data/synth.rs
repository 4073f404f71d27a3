use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::numerics::{RngState, Tensor};

/// Daily-cycle series whose noise level itself cycles:
/// `y_t = sin(2πt/P) + s(t)·ε_t`,
/// `s(t) = s_min + (s_max - s_min)·(1 + sin(2πt/P + ψ))/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub period: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Phase offset `ψ` of the noise cycle relative to the level cycle.
    pub phase: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            period: 24.0,
            s_min: 0.1,
            s_max: 0.5,
            phase: std::f64::consts::FRAC_PI_2,
        }
    }
}

impl SynthParams {
    pub fn level(&self, t: usize) -> f64 {
        (std::f64::consts::TAU * t as f64 / self.period).sin()
    }

    pub fn scale(&self, t: usize) -> f64 {
        let w = std::f64::consts::TAU * t as f64 / self.period + self.phase;
        self.s_min + (self.s_max - self.s_min) * 0.5 * (1.0 + w.sin())
    }
}

/// Generated series plus its true noise scale per row.
#[derive(Debug, Clone)]
pub struct SyntheticSeries {
    pub dataset: Dataset,
    /// `s(t)` for every row, shared by all channels.
    pub scale: Vec<f64>,
    pub params: SynthParams,
}

/// Channels share the level and scale cycles and differ only in their noise.
pub fn synth_heteroscedastic(rows: usize, channels: usize, seed: u64, params: SynthParams) -> SyntheticSeries {
    let mut rng = RngState::substream(seed, &[0x5e1f]);
    let scale: Vec<f64> = (0..rows).map(|t| params.scale(t)).collect();
    let values = Tensor::from_fn(&[rows, channels], |i| {
        let t = i / channels;
        params.level(t) + scale[t] * rng.standard_normal()
    });
    let names = (0..channels).map(|c| format!("ch{c}")).collect();
    SyntheticSeries {
        dataset: Dataset::new(values, names).expect("names match channels"),
        scale,
        params,
    }
}
