//! Fitting a 1-D target with a push-forward of a standard-normal prior.
//!
//! The history is held constant, so the encoder has nothing to condition on
//! and only the map's expressiveness is exercised: a `D → hidden → 1` GeLU
//! network is trained with the KDE likelihood against draws from a Gaussian
//! mixture, then compared to the target by exact 1-D W₁.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plot::LineChart;
use crate::error::{PpmError, Result};
use crate::model::{mlp_backward, mlp_forward, push_mlp, ParamStore};
use crate::numerics::{RngState, Tensor};
use crate::objective::{grad_samples_nll, kde_log_density, ObjectiveConfig};
use crate::trainer::{Adam, AdamConfig};

const INIT_STREAM: u64 = 0x1d01;
const TRAIN_STREAM: u64 = 0x1d02;
const EVAL_STREAM: u64 = 0x1d03;

/// Exact 1-Wasserstein distance between two empirical distributions,
/// `∫ |F_a(x) - F_b(x)| dx`. For equal sizes this is the mean absolute
/// difference of matched order statistics.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(PpmError::Empty("W1 sample set"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    // walk the merged support; both CDFs are constant between breakpoints
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Finite Gaussian mixture on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    /// `(weight, mean, std)`; weights are normalized on use.
    pub components: Vec<(f64, f64, f64)>,
}

impl MixtureSpec {
    pub fn standard_normal() -> Self {
        MixtureSpec { components: vec![(1.0, 0.0, 1.0)] }
    }

    /// `0.5·N(-2, 0.25) + 0.5·N(2, 0.25)`, variances 0.25.
    pub fn bimodal() -> Self {
        MixtureSpec {
            components: vec![(0.5, -2.0, 0.5), (0.5, 2.0, 0.5)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.components.iter().map(|c| c.0).sum();
        if self.components.is_empty()
            || !(total > 0.0)
            || self.components.iter().any(|&(w, m, s)| !(w >= 0.0 && m.is_finite() && s > 0.0))
        {
            return Err(PpmError::InvalidArgument(format!("invalid mixture {:?}", self.components)));
        }
        Ok(())
    }

    pub fn sample(&self, n: usize, rng: &mut RngState) -> Vec<f64> {
        let total: f64 = self.components.iter().map(|c| c.0).sum();
        (0..n)
            .map(|_| {
                let mut u = rng.uniform_open() * total;
                let mut pick = self.components[self.components.len() - 1];
                for &c in &self.components {
                    if u < c.0 {
                        pick = c;
                        break;
                    }
                    u -= c.0;
                }
                pick.1 + pick.2 * rng.standard_normal()
            })
            .collect()
    }

    pub fn density(&self, x: f64) -> f64 {
        let total: f64 = self.components.iter().map(|c| c.0).sum();
        self.components
            .iter()
            .map(|&(w, m, s)| w / total * crate::numerics::normal_pdf((x - m) / s) / s)
            .sum()
    }
}

/// `z ∈ R^D → GeLU(z·W1 + b1)·W2 + b2 ∈ R` applied to standard-normal `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PushForwardMap {
    pub params: ParamStore,
    pub latent_dim: usize,
}

impl PushForwardMap {
    pub fn random(latent_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let mut rng = RngState::substream(seed, &[INIT_STREAM]);
        push_mlp(&mut params, "map", latent_dim, hidden, 1, &mut rng);
        PushForwardMap { params, latent_dim }
    }

    /// Exactly `z ↦ z₀`, from `GeLU(u) - GeLU(-u) = u`.
    pub fn identity(latent_dim: usize, hidden: usize) -> Result<Self> {
        if hidden < 2 || latent_dim == 0 {
            return Err(PpmError::InvalidArgument("identity map needs hidden >= 2 and latent_dim >= 1".into()));
        }
        let mut params = ParamStore::new();
        let mut w1 = Tensor::zeros(&[latent_dim, hidden]);
        w1.set2(0, 0, 1.0);
        w1.set2(0, 1, -1.0);
        let mut w2 = Tensor::zeros(&[hidden, 1]);
        w2.set2(0, 0, 1.0);
        w2.set2(1, 0, -1.0);
        params.push("map.w1", w1);
        params.push("map.b1", Tensor::zeros(&[hidden]));
        params.push("map.w2", w2);
        params.push("map.b2", Tensor::zeros(&[1]));
        Ok(PushForwardMap { params, latent_dim })
    }

    pub fn apply(&self, z: Tensor) -> Result<Tensor> {
        mlp_forward(self.params.values(), z).map(|(x, _)| x)
    }

    pub fn generate(&self, n: usize, rng: &mut RngState) -> Result<Vec<f64>> {
        let z = Tensor::from_fn(&[n, self.latent_dim], |_| rng.standard_normal());
        Ok(self.apply(z)?.into_data())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniversalityConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub steps: usize,
    /// Generated samples per step.
    pub k: usize,
    /// Target draws scored per step.
    pub batch: usize,
    pub learning_rate: f64,
    /// The rate decays linearly to `learning_rate · lr_final_fraction` by
    /// the last step.
    pub lr_final_fraction: f64,
    pub bandwidth: f64,
    pub eval_samples: usize,
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for UniversalityConfig {
    fn default() -> Self {
        UniversalityConfig {
            latent_dim: 4,
            hidden: 64,
            steps: 20_000,
            k: 256,
            batch: 256,
            learning_rate: 1e-2,
            lr_final_fraction: 0.05,
            bandwidth: 0.1,
            eval_samples: 10_000,
            trace_every: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportReport {
    pub target: MixtureSpec,
    pub map: PushForwardMap,
    /// W₁ between generated and target samples after training.
    pub w1_trained: f64,
    /// W₁ of the untrained map.
    pub w1_initial: f64,
    /// W₁ of the moment-matched single Gaussian.
    pub w1_gaussian_fit: f64,
    /// W₁ between two independent target draws of the same size.
    pub w1_noise_floor: f64,
    /// `(step, W₁)` during training.
    pub trace: Vec<(usize, f64)>,
    /// Mean KDE NLL over the last step's target batch.
    pub final_nll: f64,
}

fn eval_w1(map: &PushForwardMap, target: &[f64], rng: &mut RngState) -> Result<f64> {
    let gen = map.generate(target.len(), rng)?;
    wasserstein_1d(&gen, target)
}

/// Train from `init` against `target` and report transport distances on
/// fresh draws.
pub fn fit_push_forward(target: &MixtureSpec, init: PushForwardMap, cfg: &UniversalityConfig) -> Result<TransportReport> {
    target.validate()?;
    if cfg.k == 0 || cfg.batch == 0 || cfg.eval_samples == 0 {
        return Err(PpmError::InvalidArgument("k, batch and eval_samples must be positive".into()));
    }
    let obj = ObjectiveConfig {
        bandwidth: cfg.bandwidth,
        ..ObjectiveConfig::default()
    };
    obj.validate()?;
    let mut eval_rng = RngState::substream(cfg.seed, &[EVAL_STREAM]);
    let eval_target = target.sample(cfg.eval_samples, &mut eval_rng);
    let second_draw = target.sample(cfg.eval_samples, &mut eval_rng);
    let w1_noise_floor = wasserstein_1d(&eval_target, &second_draw)?;
    let n = eval_target.len() as f64;
    let mean = eval_target.iter().sum::<f64>() / n;
    let std = (eval_target.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let fit: Vec<f64> = (0..eval_target.len()).map(|_| mean + std * eval_rng.standard_normal()).collect();
    let w1_gaussian_fit = wasserstein_1d(&fit, &eval_target)?;

    let mut map = init;
    let w1_initial = eval_w1(&map, &eval_target, &mut RngState::substream(cfg.seed, &[EVAL_STREAM, 0]))?;
    let mut trace = vec![(0, w1_initial)];
    let mut opt = Adam::new(&map.params, AdamConfig::default());
    let mut final_nll = f64::NAN;
    for step in 1..=cfg.steps {
        let mut rng = RngState::substream(cfg.seed, &[TRAIN_STREAM, step as u64]);
        let z = Tensor::from_fn(&[cfg.k, map.latent_dim], |_| rng.standard_normal());
        let ys = target.sample(cfg.batch, &mut rng);
        let (x, cache) = mlp_forward(map.params.values(), z)?;
        let samples = x.data();
        let mut grad = Tensor::zeros(&[cfg.k, 1]);
        let mut nll = 0.0;
        for &y in &ys {
            nll -= kde_log_density(y, samples, &obj)?.log_q;
            let g = grad_samples_nll(y, samples, &obj)?;
            for (a, b) in grad.data_mut().iter_mut().zip(g) {
                *a += b / cfg.batch as f64;
            }
        }
        nll /= cfg.batch as f64;
        if !nll.is_finite() || !grad.is_finite() {
            return Err(PpmError::Numeric {
                message: format!("push-forward fit diverged at step {step}"),
                floor_fraction: f64::NAN,
            });
        }
        let mut grads = map.params.zeros_like();
        mlp_backward(map.params.values(), &cache, &grad, &mut grads)?;
        map.params.zero_grad();
        map.params.accumulate(&grads)?;
        let progress = (step - 1) as f64 / cfg.steps.max(1) as f64;
        let lr = cfg.learning_rate * (1.0 - (1.0 - cfg.lr_final_fraction) * progress);
        opt.step(&mut map.params, lr)?;
        final_nll = nll;
        if cfg.trace_every > 0 && step % cfg.trace_every == 0 {
            let w = eval_w1(&map, &eval_target, &mut RngState::substream(cfg.seed, &[EVAL_STREAM, step as u64]))?;
            trace.push((step, w));
        }
    }
    let w1_trained = eval_w1(&map, &eval_target, &mut RngState::substream(cfg.seed, &[EVAL_STREAM, u64::MAX]))?;
    Ok(TransportReport {
        target: target.clone(),
        map,
        w1_trained,
        w1_initial,
        w1_gaussian_fit,
        w1_noise_floor,
        trace,
        final_nll,
    })
}

/// Train a randomly initialized map on `target`.
pub fn universality_demo(target: &MixtureSpec, cfg: &UniversalityConfig) -> Result<TransportReport> {
    let init = PushForwardMap::random(cfg.latent_dim, cfg.hidden, cfg.seed);
    fit_push_forward(target, init, cfg)
}

impl TransportReport {
    /// Writes `transport_trace.csv`, `transport_summary.csv` and
    /// `transport.svg` (target density against a histogram of generated
    /// samples).
    pub fn write_artifacts(&self, dir: impl AsRef<Path>, seed: u64) -> Result<()> {
        let dir = dir.as_ref();
        let wrap = |e: csv::Error| PpmError::Data(e.to_string());
        let p = dir.join("transport_trace.csv");
        let mut w = csv::Writer::from_path(&p).map_err(wrap)?;
        w.write_record(["step", "w1"]).map_err(wrap)?;
        for &(s, v) in &self.trace {
            w.write_record([s.to_string(), format!("{v:?}")]).map_err(wrap)?;
        }
        w.flush().map_err(|e| PpmError::io(&p, e))?;

        let p = dir.join("transport_summary.csv");
        let mut w = csv::Writer::from_path(&p).map_err(wrap)?;
        w.write_record(["quantity", "value"]).map_err(wrap)?;
        for (k, v) in [
            ("w1_trained", self.w1_trained),
            ("w1_initial", self.w1_initial),
            ("w1_gaussian_fit", self.w1_gaussian_fit),
            ("w1_noise_floor", self.w1_noise_floor),
            ("final_nll", self.final_nll),
        ] {
            w.write_record([k.to_string(), format!("{v:?}")]).map_err(wrap)?;
        }
        w.flush().map_err(|e| PpmError::io(&p, e))?;

        let gen = self.map.generate(20_000, &mut RngState::substream(seed, &[EVAL_STREAM, 1 << 40]))?;
        let (lo, hi, bins) = (-5.0, 5.0, 80);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for x in &gen {
            if (lo..hi).contains(x) {
                counts[((x - lo) / width) as usize] += 1;
            }
        }
        let hist: Vec<(f64, f64)> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64 / (gen.len() as f64 * width)))
            .collect();
        let dens: Vec<(f64, f64)> = hist.iter().map(|&(x, _)| (x, self.target.density(x))).collect();
        LineChart::new("Push-forward fit of a 1-D target", "x", "density")
            .line("generated (histogram)", hist)
            .dashed("target density", dens)
            .save(dir.join("transport.svg"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Optimal assignment over all permutations; for uniform weights of equal
    /// size this is the transport linear program.
    fn lp_oracle(a: &[f64], b: &[f64]) -> f64 {
        fn rec(a: &[f64], b: &mut Vec<f64>, i: usize, acc: f64, best: &mut f64) {
            if i == a.len() {
                *best = best.min(acc);
                return;
            }
            for j in i..b.len() {
                b.swap(i, j);
                rec(a, b, i + 1, acc + (a[i] - b[i]).abs(), best);
                b.swap(i, j);
            }
        }
        let mut best = f64::INFINITY;
        rec(a, &mut b.to_vec(), 0, 0.0, &mut best);
        best / a.len() as f64
    }

    proptest! {
        #[test]
        fn matches_assignment_oracle(
            pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..=7),
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let w = wasserstein_1d(&a, &b).unwrap();
            prop_assert!((w - lp_oracle(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn cdf_walk_agrees_with_order_statistics(
            a in prop::collection::vec(-5.0f64..5.0, 1..20),
        ) {
            // duplicating every point leaves the distribution unchanged
            let b: Vec<f64> = a.iter().flat_map(|&x| [x + 0.3, x + 0.3]).collect();
            let w = wasserstein_1d(&a, &b).unwrap();
            prop_assert!((w - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn self_distance_is_zero() {
        let a = [3.0, -1.0, 2.5, 0.0];
        assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
        assert!(wasserstein_1d(&[], &a).is_err());
    }

    #[test]
    fn identity_map_matches_a_normal_target_without_training() {
        let map = PushForwardMap::identity(4, 8).unwrap();
        let z = Tensor::from_fn(&[5, 4], |i| i as f64 * 0.37 - 3.0);
        let x = map.apply(z.clone()).unwrap();
        for i in 0..5 {
            assert!((x.data()[i] - z.get2(i, 0)).abs() < 1e-12);
        }
        let cfg = UniversalityConfig { steps: 0, ..UniversalityConfig::default() };
        let r = fit_push_forward(&MixtureSpec::standard_normal(), map, &cfg).unwrap();
        assert!(r.w1_trained < 0.05, "{}", r.w1_trained);
        assert!(r.w1_noise_floor < 0.05);
    }

    #[test]
    fn mixture_sampling_moments() {
        let m = MixtureSpec::bimodal();
        let s = m.sample(100_000, &mut RngState::new(9));
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 0.03);
        // 0.25 + 4
        assert!((var - 4.25).abs() < 0.05);
    }
}
