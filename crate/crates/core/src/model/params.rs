use crate::error::{PpmError, Result};
use crate::numerics::{RngState, Tensor};

use super::config::ModelConfig;

/// Trainable tensors with a congruent gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

pub(crate) const ENCODER: usize = 0;
pub(crate) const MAPPER: usize = 4;

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        self.grads.push(Tensor::zeros(value.shape()));
        self.names.push(name.into());
        self.values.push(value);
    }

    /// Encoder `H → hidden → 2D` followed by mapper `D → hidden → L`, each
    /// layer initialized uniformly in ±1/√fan_in.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = RngState::substream(seed, &[0x1417]);
        let mut store = ParamStore::new();
        let mw = cfg.mapper_width();
        push_mlp(&mut store, "enc", cfg.history, cfg.hidden, 2 * cfg.latent_dim, &mut rng);
        push_mlp(&mut store, "map", cfg.latent_dim, mw, cfg.horizon, &mut rng);
        store
    }

    /// Expected `(name, shape)` list for a config.
    pub fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let mw = cfg.mapper_width();
        vec![
            ("enc.w1".into(), vec![cfg.history, cfg.hidden]),
            ("enc.b1".into(), vec![cfg.hidden]),
            ("enc.w2".into(), vec![cfg.hidden, 2 * cfg.latent_dim]),
            ("enc.b2".into(), vec![2 * cfg.latent_dim]),
            ("map.w1".into(), vec![cfg.latent_dim, mw]),
            ("map.b1".into(), vec![mw]),
            ("map.w2".into(), vec![mw, cfg.horizon]),
            ("map.b2".into(), vec![cfg.horizon]),
        ]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn grads(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [Tensor] {
        &mut self.grads
    }

    pub(crate) fn split_mut(&mut self) -> (&mut [Tensor], &[Tensor]) {
        (&mut self.values, &self.grads)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.values[i])
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.grads[i])
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Zeroed tensors shaped like the parameters.
    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.values.iter().map(|v| Tensor::zeros(v.shape())).collect()
    }

    /// Add a gradient contribution into the buffer.
    pub fn accumulate(&mut self, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.grads.len() {
            return Err(PpmError::shape(
                "ParamStore::accumulate",
                format!("{} tensors for {} parameters", grads.len(), self.grads.len()),
            ));
        }
        for (dst, src) in self.grads.iter_mut().zip(grads) {
            dst.add_assign(src)?;
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.scale(factor);
        }
    }

    /// Every parameter in one flat vector, in store order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.data().iter().copied()).collect()
    }

    pub fn flatten_grads(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|v| v.data().iter().copied()).collect()
    }

    /// Mutable access to the i-th scalar in flattened order.
    pub fn scalar_mut(&mut self, mut i: usize) -> &mut f64 {
        for v in &mut self.values {
            if i < v.len() {
                return &mut v.data_mut()[i];
            }
            i -= v.len();
        }
        panic!("scalar index out of range")
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) fn push_mlp(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    output: usize,
    rng: &mut RngState,
) {
    let mut uniform = |shape: &[usize], fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Tensor::from_fn(shape, |_| bound * (2.0 * rng.uniform_open() - 1.0))
    };
    let w1 = uniform(&[input, hidden], input);
    let b1 = uniform(&[hidden], input);
    let w2 = uniform(&[hidden, output], hidden);
    let b2 = uniform(&[output], hidden);
    store.push(format!("{prefix}.w1"), w1);
    store.push(format!("{prefix}.b1"), b1);
    store.push(format!("{prefix}.w2"), w2);
    store.push(format!("{prefix}.b2"), b2);
}
