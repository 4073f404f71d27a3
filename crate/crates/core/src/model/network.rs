use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{PpmError, Result};
use crate::numerics::{
    affine_backward, affine_forward, gelu_backward, gelu_forward, sigmoid, softplus, PriorFamily,
    RngState, Tensor,
};

use super::config::ModelConfig;
use super::params::{ParamStore, ENCODER, MAPPER};

/// Floor added to the softplus scale.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Location and scale of the conditional latent prior, each `[C×D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorParams {
    pub mu: Tensor,
    pub sigma: Tensor,
}

/// Activations of a two-layer GeLU network, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    input: Tensor,
    pre: Tensor,
    act: Tensor,
}

/// `x → GeLU(x·W1 + b1)·W2 + b2`, with `p = [W1, b1, W2, b2]`.
pub(crate) fn mlp_forward(p: &[Tensor], x: Tensor) -> Result<(Tensor, MlpCache)> {
    let pre = affine_forward(&x, &p[0], &p[1])?;
    let act = gelu_forward(&pre);
    let out = affine_forward(&act, &p[2], &p[3])?;
    Ok((out, MlpCache { input: x, pre, act }))
}

/// Accumulates parameter gradients into `grads` (same layout as `p`) and
/// returns the gradient with respect to the network input.
pub(crate) fn mlp_backward(
    p: &[Tensor],
    cache: &MlpCache,
    grad_out: &Tensor,
    grads: &mut [Tensor],
) -> Result<Tensor> {
    let top = affine_backward(grad_out, &cache.act, &p[2])?;
    grads[2].add_assign(&top.weight)?;
    grads[3].add_assign(&top.bias)?;
    let grad_pre = gelu_backward(&top.input, &cache.pre)?;
    let bottom = affine_backward(&grad_pre, &cache.input, &p[0])?;
    grads[0].add_assign(&bottom.weight)?;
    grads[1].add_assign(&bottom.bias)?;
    Ok(bottom.input)
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    encoder: MlpCache,
    /// Raw scale head before softplus, `[C×D]`.
    raw_sigma: Tensor,
    mapper: MlpCache,
}

/// `K` sampled trajectories plus the draws that produced them.
#[derive(Debug, Clone)]
pub struct ForecastEnsemble {
    /// `[K×L×C]`
    pub samples: Tensor,
    /// `[K×C×D]`, `mu + sigma ⊙ noise`
    pub latents: Tensor,
    /// `[K×C×D]`
    pub noise: Tensor,
    pub prior: PriorParams,
    pub(crate) cache: Option<Box<ForwardCache>>,
}

impl ForecastEnsemble {
    /// Wrap bare samples `[K×L×C]` with no latent draws attached, e.g. for
    /// scoring ensembles that did not come from a model.
    pub fn from_samples(samples: Tensor) -> Result<Self> {
        let (k, _, c) = samples.dims3()?;
        let empty = Tensor::zeros(&[k, c, 0]);
        Ok(ForecastEnsemble {
            samples,
            latents: empty.clone(),
            noise: empty,
            prior: PriorParams {
                mu: Tensor::zeros(&[c, 0]),
                sigma: Tensor::zeros(&[c, 0]),
            },
            cache: None,
        })
    }

    pub fn k(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn horizon(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.samples.shape()[2]
    }

    /// The `K` draws at step `t` of channel `c`.
    pub fn coordinate(&self, t: usize, c: usize) -> Vec<f64> {
        let (k, l, ch) = (self.k(), self.horizon(), self.channels());
        let data = self.samples.data();
        (0..k).map(|j| data[(j * l + t) * ch + c]).collect()
    }

    /// Ensemble mean, `[L×C]`.
    pub fn mean(&self) -> Tensor {
        let (k, l, c) = (self.k(), self.horizon(), self.channels());
        let mut out = Tensor::zeros(&[l, c]);
        for j in 0..k {
            for (o, v) in out
                .data_mut()
                .iter_mut()
                .zip(&self.samples.data()[j * l * c..(j + 1) * l * c])
            {
                *o += v;
            }
        }
        out.scale(1.0 / k as f64);
        out
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Drop the backward caches, keeping samples and draws.
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }
}

/// Counts network evaluations. Mapper evaluations count latent draws
/// (one per sample), not batched calls.
#[derive(Debug, Default)]
pub struct CallCounters {
    encoder: AtomicUsize,
    mapper: AtomicUsize,
}

impl CallCounters {
    pub fn encoder_calls(&self) -> usize {
        self.encoder.load(Ordering::Relaxed)
    }

    pub fn mapper_evals(&self) -> usize {
        self.mapper.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.encoder.store(0, Ordering::Relaxed);
        self.mapper.store(0, Ordering::Relaxed);
    }
}

/// Encoder, prior and push-forward map.
#[derive(Debug)]
pub struct PpmModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    counters: CallCounters,
}

impl Clone for PpmModel {
    fn clone(&self) -> Self {
        PpmModel {
            config: self.config.clone(),
            params: self.params.clone(),
            counters: CallCounters::default(),
        }
    }
}

impl PpmModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::init(&config, seed);
        Ok(PpmModel {
            config,
            params,
            counters: CallCounters::default(),
        })
    }

    /// Wrap existing parameters, checking them against the config layout.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = ParamStore::layout(&config);
        if layout.len() != params.len() {
            return Err(PpmError::shape(
                "PpmModel::from_params",
                format!("expected {} tensors, got {}", layout.len(), params.len()),
            ));
        }
        for ((name, shape), (n, v)) in layout.iter().zip(params.names().iter().zip(params.values())) {
            if name != n || shape.as_slice() != v.shape() {
                return Err(PpmError::shape(
                    "PpmModel::from_params",
                    format!("{n} {:?} does not match {name} {shape:?}", v.shape()),
                ));
            }
        }
        Ok(PpmModel {
            config,
            params,
            counters: CallCounters::default(),
        })
    }

    pub fn counters(&self) -> &CallCounters {
        &self.counters
    }

    fn encoder_params(&self) -> &[Tensor] {
        &self.params.values()[ENCODER..ENCODER + 4]
    }

    fn mapper_params(&self) -> &[Tensor] {
        &self.params.values()[MAPPER..MAPPER + 4]
    }

    fn check_history(&self, x: &Tensor) -> Result<()> {
        let want = [self.config.history, self.config.channels];
        if x.shape() != want {
            return Err(PpmError::shape(
                "encode",
                format!("history {:?}, expected {want:?}", x.shape()),
            ));
        }
        x.ensure_finite("history window")
    }

    fn encode_cached(&self, x: &Tensor) -> Result<(PriorParams, MlpCache, Tensor)> {
        self.check_history(x)?;
        self.counters.encoder.fetch_add(1, Ordering::Relaxed);
        let (c, d) = (self.config.channels, self.config.latent_dim);
        // channels become rows so the shared weights see one series at a time
        let (out, cache) = mlp_forward(self.encoder_params(), x.transpose2()?)?;
        let mut mu = Tensor::zeros(&[c, d]);
        let mut raw = Tensor::zeros(&[c, d]);
        for ch in 0..c {
            let row = out.row(ch);
            mu.row_mut(ch).copy_from_slice(&row[..d]);
            raw.row_mut(ch).copy_from_slice(&row[d..]);
        }
        let sigma = match self.config.fixed_sigma {
            Some(s) => Tensor::full(&[c, d], s),
            None => raw.map(|r| softplus(r) + SIGMA_FLOOR),
        };
        Ok((PriorParams { mu, sigma }, cache, raw))
    }

    /// Prior statistics for one history window `[H×C]`.
    pub fn encode(&self, x: &Tensor) -> Result<PriorParams> {
        self.encode_cached(x).map(|(p, _, _)| p)
    }

    fn push_forward_cached(&self, latents: &Tensor) -> Result<(Tensor, MlpCache)> {
        let (k, c, d) = latents.dims3()?;
        if c != self.config.channels || d != self.config.latent_dim {
            return Err(PpmError::shape(
                "push_forward",
                format!(
                    "latents {:?}, expected [K, {}, {}]",
                    latents.shape(),
                    self.config.channels,
                    self.config.latent_dim
                ),
            ));
        }
        self.counters.mapper.fetch_add(k, Ordering::Relaxed);
        let l = self.config.horizon;
        let flat = latents.clone().reshape(&[k * c, d])?;
        let (out, cache) = mlp_forward(self.mapper_params(), flat)?;
        let mut samples = Tensor::zeros(&[k, l, c]);
        let dst = samples.data_mut();
        for j in 0..k {
            for ch in 0..c {
                let row = out.row(j * c + ch);
                for (t, &v) in row.iter().enumerate() {
                    dst[(j * l + t) * c + ch] = v;
                }
            }
        }
        Ok((samples, cache))
    }

    /// Apply the shared map independently to every `(k, c)` latent row,
    /// `[K×C×D] → [K×L×C]`.
    pub fn push_forward(&self, latents: &Tensor) -> Result<Tensor> {
        self.push_forward_cached(latents).map(|(s, _)| s)
    }

    fn run(&self, x: &Tensor, k: usize, rng: &mut RngState, keep_cache: bool) -> Result<ForecastEnsemble> {
        let (prior, enc_cache, raw) = self.encode_cached(x)?;
        let (latents, noise) = sample_prior(&prior, k, self.config.prior, rng)?;
        let (samples, map_cache) = self.push_forward_cached(&latents)?;
        let cache = keep_cache.then(|| {
            Box::new(ForwardCache {
                encoder: enc_cache,
                raw_sigma: raw,
                mapper: map_cache,
            })
        });
        Ok(ForecastEnsemble {
            samples,
            latents,
            noise,
            prior,
            cache,
        })
    }

    /// One encoder pass, `K` prior draws, one batched map pass.
    pub fn forecast(&self, x: &Tensor, k: usize, rng: &mut RngState) -> Result<ForecastEnsemble> {
        self.run(x, k, rng, false)
    }

    /// Like [`forecast`](Self::forecast) but keeps every activation needed by
    /// [`backward`](Self::backward).
    pub fn forward(&self, x: &Tensor, k: usize, rng: &mut RngState) -> Result<ForecastEnsemble> {
        self.run(x, k, rng, true)
    }

    /// Chain `dLoss/dsamples` (`[K×L×C]`) back to every parameter. Returns
    /// fresh gradient tensors in store order.
    pub fn backward(&self, ens: &ForecastEnsemble, grad_samples: &Tensor) -> Result<Vec<Tensor>> {
        let cache = ens
            .cache
            .as_deref()
            .ok_or(PpmError::MissingCache("ensemble was produced without caches"))?;
        if grad_samples.shape() != ens.samples.shape() {
            return Err(PpmError::shape(
                "backward",
                format!("grad {:?} vs samples {:?}", grad_samples.shape(), ens.samples.shape()),
            ));
        }
        let (k, l, c) = grad_samples.dims3()?;
        let d = self.config.latent_dim;
        let mut grads = self.params.zeros_like();

        let mut grad_out = Tensor::zeros(&[k * c, l]);
        let src = grad_samples.data();
        for j in 0..k {
            for ch in 0..c {
                let row = grad_out.row_mut(j * c + ch);
                for (t, g) in row.iter_mut().enumerate() {
                    *g = src[(j * l + t) * c + ch];
                }
            }
        }
        let grad_latent = mlp_backward(
            self.mapper_params(),
            &cache.mapper,
            &grad_out,
            &mut grads[MAPPER..MAPPER + 4],
        )?;

        // z = mu + sigma ⊙ eps: dz/dmu = 1, dz/dsigma = eps
        let learned_sigma = self.config.fixed_sigma.is_none();
        let mut grad_head = Tensor::zeros(&[c, 2 * d]);
        let gl = grad_latent.data();
        let eps = ens.noise.data();
        let raw = cache.raw_sigma.data();
        for ch in 0..c {
            let row = grad_head.row_mut(ch);
            for j in 0..k {
                let base = (j * c + ch) * d;
                for i in 0..d {
                    row[i] += gl[base + i];
                    if learned_sigma {
                        row[d + i] += gl[base + i] * eps[base + i];
                    }
                }
            }
            if learned_sigma {
                for i in 0..d {
                    row[d + i] *= sigmoid(raw[ch * d + i]);
                }
            }
        }
        mlp_backward(
            self.encoder_params(),
            &cache.encoder,
            &grad_head,
            &mut grads[ENCODER..ENCODER + 4],
        )?;
        Ok(grads)
    }
}

/// Reparameterized draws `z = mu + sigma ⊙ eps`, returned as
/// `(latents, noise)`, both `[K×C×D]`. Draws are generated sample-major, so
/// sample `k` does not depend on how many samples follow it.
pub fn sample_prior(
    prior: &PriorParams,
    k: usize,
    family: PriorFamily,
    rng: &mut RngState,
) -> Result<(Tensor, Tensor)> {
    if k == 0 {
        return Err(PpmError::InvalidArgument("need at least one sample".into()));
    }
    if prior.mu.shape() != prior.sigma.shape() {
        return Err(PpmError::shape(
            "sample_prior",
            format!("mu {:?} vs sigma {:?}", prior.mu.shape(), prior.sigma.shape()),
        ));
    }
    family.validate()?;
    let (c, d) = prior.mu.dims2()?;
    let mut noise = Tensor::zeros(&[k, c, d]);
    family.fill(noise.data_mut(), rng);
    let mut latents = Tensor::zeros(&[k, c, d]);
    let (mu, sigma) = (prior.mu.data(), prior.sigma.data());
    for (i, (z, e)) in latents.data_mut().iter_mut().zip(noise.data()).enumerate() {
        let p = i % (c * d);
        *z = mu[p] + sigma[p] * e;
    }
    Ok((latents, noise))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            latent_dim: 3,
            hidden: 5,
            ..ModelConfig::new(4, 3, 2)
        }
    }

    fn history(cfg: &ModelConfig, seed: u64) -> Tensor {
        let mut rng = RngState::new(seed);
        Tensor::from_fn(&[cfg.history, cfg.channels], |_| rng.standard_normal())
    }

    #[test]
    fn zero_weights_give_softplus_zero_scale() {
        let cfg = tiny_config();
        let mut model = PpmModel::new(cfg.clone(), 1).unwrap();
        for v in model.params.values_mut() {
            v.fill(0.0);
        }
        let p = model.encode(&history(&cfg, 2)).unwrap();
        assert!(p.mu.data().iter().all(|&v| v == 0.0));
        for &s in p.sigma.data() {
            assert!((s - (2f64.ln() + 1e-6)).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_unit_sigma_ignores_encoder() {
        let cfg = ModelConfig {
            fixed_sigma: Some(1.0),
            ..tiny_config()
        };
        let model = PpmModel::new(cfg.clone(), 3).unwrap();
        let p = model.encode(&history(&cfg, 4)).unwrap();
        assert!(p.sigma.data().iter().all(|&s| s == 1.0));
        assert!(cfg.fixed_unit_sigma());
    }

    #[test]
    fn identical_channels_identical_rows() {
        let cfg = tiny_config();
        let model = PpmModel::new(cfg.clone(), 5).unwrap();
        let mut x = history(&cfg, 6);
        for t in 0..cfg.history {
            let v = x.get2(t, 0);
            x.set2(t, 1, v);
        }
        let p = model.encode(&x).unwrap();
        assert_eq!(p.mu.row(0), p.mu.row(1));
        assert_eq!(p.sigma.row(0), p.sigma.row(1));
    }

    #[test]
    fn encode_rejects_bad_input() {
        let cfg = tiny_config();
        let model = PpmModel::new(cfg.clone(), 5).unwrap();
        assert!(matches!(
            model.encode(&Tensor::zeros(&[cfg.history + 1, cfg.channels])),
            Err(PpmError::Shape { .. })
        ));
        let mut x = history(&cfg, 1);
        x.data_mut()[3] = f64::NAN;
        assert!(matches!(model.encode(&x), Err(PpmError::NonFinite(_))));
    }

    #[test]
    fn zero_sigma_collapses_latents_onto_mu() {
        let mu = Tensor::from_fn(&[2, 3], |i| i as f64 - 1.0);
        let prior = PriorParams {
            sigma: Tensor::zeros(&[2, 3]),
            mu: mu.clone(),
        };
        let (lat, _) = sample_prior(&prior, 7, PriorFamily::Gaussian, &mut RngState::new(1)).unwrap();
        for k in 0..7 {
            assert_eq!(lat.row(k), mu.data());
        }
    }

    #[test]
    fn latent_means_concentrate_around_mu() {
        let mu = Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.0]]).unwrap();
        let sigma = Tensor::from_rows(&[vec![1.0, 0.3], vec![2.0, 0.01]]).unwrap();
        let prior = PriorParams {
            mu: mu.clone(),
            sigma: sigma.clone(),
        };
        let k = 100_000;
        let (lat, _) = sample_prior(&prior, k, PriorFamily::Gaussian, &mut RngState::new(9)).unwrap();
        for p in 0..4 {
            let m = (0..k).map(|j| lat.data()[j * 4 + p]).sum::<f64>() / k as f64;
            let tol = 4.0 * sigma.data()[p] / (k as f64).sqrt();
            assert!((m - mu.data()[p]).abs() < tol, "coord {p}: {m}");
        }
    }

    #[test]
    fn reparameterization_identity_recovers_noise() {
        let cfg = tiny_config();
        let model = PpmModel::new(cfg.clone(), 8).unwrap();
        let ens = model.forecast(&history(&cfg, 9), 11, &mut RngState::new(10)).unwrap();
        let (c, d) = (cfg.channels, cfg.latent_dim);
        for (i, (&z, &e)) in ens.latents.data().iter().zip(ens.noise.data()).enumerate() {
            let p = i % (c * d);
            let rec = (z - ens.prior.mu.data()[p]) / ens.prior.sigma.data()[p];
            assert!((rec - e).abs() < 1e-9 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn zero_weights_map_to_output_bias() {
        let cfg = tiny_config();
        let mut model = PpmModel::new(cfg.clone(), 1).unwrap();
        for name in ["map.w1", "map.b1", "map.w2"] {
            model.params.get_mut(name).unwrap().fill(0.0);
        }
        let bias = model.params.get("map.b2").unwrap().clone();
        let lat = Tensor::from_fn(&[4, cfg.channels, cfg.latent_dim], |i| i as f64 * 0.3);
        let out = model.push_forward(&lat).unwrap();
        for k in 0..4 {
            for t in 0..cfg.horizon {
                for c in 0..cfg.channels {
                    assert_eq!(out.data()[(k * cfg.horizon + t) * cfg.channels + c], bias.data()[t]);
                }
            }
        }
    }

    #[test]
    fn identical_latent_rows_identical_outputs() {
        let cfg = tiny_config();
        let model = PpmModel::new(cfg.clone(), 2).unwrap();
        let row: Vec<f64> = (0..cfg.channels * cfg.latent_dim).map(|i| (i as f64).sin()).collect();
        let lat = Tensor::new(vec![2, cfg.channels, cfg.latent_dim], [row.clone(), row].concat()).unwrap();
        let out = model.push_forward(&lat).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn push_forward_jvp_matches_finite_differences() {
        let cfg = tiny_config();
        let model = PpmModel::new(cfg.clone(), 12).unwrap();
        let mut rng = RngState::new(13);
        let shape = [3, cfg.channels, cfg.latent_dim];
        let lat = Tensor::from_fn(&shape, |_| rng.standard_normal());
        let dir = Tensor::from_fn(&shape, |_| rng.standard_normal());
        let probe = Tensor::from_fn(&[3, cfg.horizon, cfg.channels], |_| rng.standard_normal());
        // <probe, J·dir> via the backward pass equals <Jᵀ·probe, dir>
        let ens = ForecastEnsemble {
            samples: model.push_forward(&lat).unwrap(),
            latents: lat.clone(),
            noise: Tensor::zeros(&shape),
            prior: PriorParams {
                mu: Tensor::zeros(&[cfg.channels, cfg.latent_dim]),
                sigma: Tensor::zeros(&[cfg.channels, cfg.latent_dim]),
            },
            cache: None,
        };
        let (_, cache) = model.push_forward_cached(&lat).unwrap();
        let mut grads = model.params.zeros_like();
        let mut gout = Tensor::zeros(&[3 * cfg.channels, cfg.horizon]);
        for k in 0..3 {
            for c in 0..cfg.channels {
                for t in 0..cfg.horizon {
                    gout.set2(k * cfg.channels + c, t, probe.data()[(k * cfg.horizon + t) * cfg.channels + c]);
                }
            }
        }
        let jt_probe = mlp_backward(model.mapper_params(), &cache, &gout, &mut grads[MAPPER..MAPPER + 4]).unwrap();
        let analytic: f64 = jt_probe.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum();
        let step = 1e-5;
        let shifted = |s: f64| {
            let z = lat.zip_map(&dir, |a, b| a + s * b).unwrap();
            let y = model.push_forward(&z).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = (shifted(step) - shifted(-step)) / (2.0 * step);
        assert!((analytic - fd).abs() / analytic.abs().max(1e-8) < 1e-5);
        assert_eq!(ens.k(), 3);
    }

    #[test]
    fn forecast_is_single_pass() {
        let cfg = tiny_config();
        let model = PpmModel::new(cfg.clone(), 2).unwrap();
        model.counters().reset();
        model.forecast(&history(&cfg, 3), 37, &mut RngState::new(4)).unwrap();
        assert_eq!(model.counters().encoder_calls(), 1);
        assert_eq!(model.counters().mapper_evals(), 37);
    }

    #[test]
    fn first_sample_does_not_depend_on_k() {
        let cfg = tiny_config();
        let model = PpmModel::new(cfg.clone(), 2).unwrap();
        let x = history(&cfg, 3);
        let one = model.forecast(&x, 1, &mut RngState::substream(5, &[1])).unwrap();
        let many = model.forecast(&x, 100, &mut RngState::substream(5, &[1])).unwrap();
        assert_eq!(one.samples.row(0), many.samples.row(0));
    }

    #[test]
    fn degenerate_prior_mean_is_map_of_mu() {
        let cfg = ModelConfig {
            fixed_sigma: Some(0.0),
            ..tiny_config()
        };
        let model = PpmModel::new(cfg.clone(), 6).unwrap();
        let x = history(&cfg, 7);
        let ens = model.forecast(&x, 10_000, &mut RngState::new(8)).unwrap();
        let mu = model.encode(&x).unwrap().mu;
        let at_mu = model
            .push_forward(&mu.reshape(&[1, cfg.channels, cfg.latent_dim]).unwrap())
            .unwrap();
        for (a, b) in ens.mean().data().iter().zip(at_mu.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_without_cache_is_an_error() {
        let cfg = tiny_config();
        let model = PpmModel::new(cfg.clone(), 2).unwrap();
        let ens = model.forecast(&history(&cfg, 3), 4, &mut RngState::new(4)).unwrap();
        let g = Tensor::zeros(ens.samples.shape());
        assert!(matches!(model.backward(&ens, &g), Err(PpmError::MissingCache(_))));
    }

    #[test]
    fn permuting_channels_permutes_outputs() {
        let cfg = tiny_config();
        let model = PpmModel::new(cfg.clone(), 21).unwrap();
        let x = history(&cfg, 22);
        let mut swapped = x.clone();
        for t in 0..cfg.history {
            swapped.set2(t, 0, x.get2(t, 1));
            swapped.set2(t, 1, x.get2(t, 0));
        }
        let a = model.encode(&x).unwrap();
        let b = model.encode(&swapped).unwrap();
        assert_eq!(a.mu.row(0), b.mu.row(1));
        assert_eq!(a.sigma.row(1), b.sigma.row(0));
    }
}
