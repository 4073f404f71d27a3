//! Training objective: a log-truncated kernel density NLL evaluated
//! marginally at every `(t, c)` coordinate, plus a squared error on the
//! ensemble mean.
//!
//! With bandwidth `h`, kernel scores `a_k = log K((y - ŷ_k)/h)` and
//! `log q̂ = -log(K h) + LSE_k a_k`, the per-coordinate loss is
//! `-max(log q̂, log ε)`. Its gradient with respect to sample `j` is
//! `1{q̂ ≥ ε} · ω_j · (log K)'(u_j) / h`, with responsibilities
//! `ω_j = softmax(a)_j`; for the Gaussian kernel that is
//! `1{q̂ ≥ ε} · ω_j · (ŷ_j - y) / h²`. The mean anchor `(y - ȳ)²` contributes
//! `2 (ȳ - y) / K` to every sample. The total is `α·NLL + w·MM` with `w = 1`
//! unless the anchor is ablated.

mod kernel;

use serde::{Deserialize, Serialize};

pub use kernel::KdeKernel;

use crate::error::{PpmError, Result};
use crate::model::ForecastEnsemble;
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// KDE bandwidth `h`.
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    /// Weight of the NLL term.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Weight of the mean anchor; 0 drops it.
    #[serde(default = "default_mm_weight")]
    pub mm_weight: f64,
    /// Density floor `ε` of the log truncation.
    #[serde(default = "default_floor")]
    pub floor_eps: f64,
    #[serde(default)]
    pub kernel: KdeKernel,
}

fn default_bandwidth() -> f64 {
    0.3
}
fn default_alpha() -> f64 {
    0.1
}
fn default_mm_weight() -> f64 {
    1.0
}
fn default_floor() -> f64 {
    1e-12
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            bandwidth: default_bandwidth(),
            alpha: default_alpha(),
            mm_weight: default_mm_weight(),
            floor_eps: default_floor(),
            kernel: KdeKernel::Gaussian,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(PpmError::InvalidArgument(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(PpmError::InvalidArgument(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.mm_weight >= 0.0 && self.mm_weight.is_finite()) {
            return Err(PpmError::InvalidArgument(format!(
                "mm_weight must be >= 0, got {}",
                self.mm_weight
            )));
        }
        if !(self.floor_eps > 0.0 && self.floor_eps.is_finite()) {
            return Err(PpmError::InvalidArgument(format!(
                "floor_eps must be positive, got {}",
                self.floor_eps
            )));
        }
        self.kernel.validate()
    }

    /// Largest possible per-coordinate NLL, `-log ε`.
    pub fn nll_ceiling(&self) -> f64 {
        -self.floor_eps.ln()
    }
}

/// Truncated log-density at one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeEval {
    /// `max(log q̂, log ε)`
    pub log_q: f64,
    /// `log q̂` before truncation.
    pub log_q_raw: f64,
    pub floored: bool,
    /// Responsibilities `ω_j`, from the untruncated kernel scores.
    pub responsibilities: Vec<f64>,
}

/// Losses of one instance or an average over instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub nll: f64,
    pub mm: f64,
    pub total: f64,
    /// Share of `(t, c)` coordinates whose density hit the floor.
    pub floor_fraction: f64,
}

impl LossReport {
    /// Unweighted mean of several reports.
    pub fn mean<'a>(reports: impl IntoIterator<Item = &'a LossReport>) -> LossReport {
        let mut acc = LossReport::default();
        let mut n = 0usize;
        for r in reports {
            acc.nll += r.nll;
            acc.mm += r.mm;
            acc.total += r.total;
            acc.floor_fraction += r.floor_fraction;
            n += 1;
        }
        if n > 0 {
            let s = 1.0 / n as f64;
            acc.nll *= s;
            acc.mm *= s;
            acc.total *= s;
            acc.floor_fraction *= s;
        }
        acc
    }
}

/// Fills `scores` with the responsibilities and returns
/// `(log q̃, log q̂, floored)`.
fn kde_core(y: f64, samples: &[f64], cfg: &ObjectiveConfig, scores: &mut Vec<f64>) -> Result<(f64, f64, bool)> {
    if samples.is_empty() {
        return Err(PpmError::Empty("ensemble"));
    }
    let h = cfg.bandwidth;
    if !(h > 0.0) {
        return Err(PpmError::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    scores.clear();
    scores.extend(samples.iter().map(|&s| cfg.kernel.log_kernel((y - s) / h)));
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for a in scores.iter_mut() {
        *a = (*a - max).exp();
        sum += *a;
    }
    for a in scores.iter_mut() {
        *a /= sum;
    }
    let log_q_raw = -((samples.len() as f64) * h).ln() + max + sum.ln();
    let log_floor = cfg.floor_eps.ln();
    let floored = log_q_raw < log_floor;
    Ok((log_q_raw.max(log_floor), log_q_raw, floored))
}

/// Truncated KDE log-density of `y` under the ensemble `samples`.
pub fn kde_log_density(y: f64, samples: &[f64], cfg: &ObjectiveConfig) -> Result<KdeEval> {
    let mut resp = Vec::with_capacity(samples.len());
    let (log_q, log_q_raw, floored) = kde_core(y, samples, cfg, &mut resp)?;
    Ok(KdeEval {
        log_q,
        log_q_raw,
        floored,
        responsibilities: resp,
    })
}

/// `∂(-log q̃)/∂ŷ_j` for every sample.
pub fn grad_samples_nll(y: f64, samples: &[f64], cfg: &ObjectiveConfig) -> Result<Vec<f64>> {
    let mut resp = Vec::with_capacity(samples.len());
    let (_, _, floored) = kde_core(y, samples, cfg, &mut resp)?;
    let mut out = vec![0.0; samples.len()];
    if !floored {
        nll_grad_from_resp(y, samples, &resp, cfg, &mut out);
    }
    Ok(out)
}

fn nll_grad_from_resp(y: f64, samples: &[f64], resp: &[f64], cfg: &ObjectiveConfig, out: &mut [f64]) {
    let h = cfg.bandwidth;
    match cfg.kernel {
        KdeKernel::Gaussian => {
            let inv_h2 = 1.0 / (h * h);
            for ((o, &w), &s) in out.iter_mut().zip(resp).zip(samples) {
                *o = inv_h2 * w * (s - y);
            }
        }
        kernel => {
            for ((o, &w), &s) in out.iter_mut().zip(resp).zip(samples) {
                *o = w * kernel.dlog_kernel((y - s) / h) / h;
            }
        }
    }
}

/// `∂(y - ȳ)²/∂ŷ_j = 2(ȳ - y)/K`, identical for every sample.
pub fn grad_samples_mm(y: f64, samples: &[f64]) -> Vec<f64> {
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    vec![2.0 * (mean - y) / k; samples.len()]
}

/// Gradient of the per-coordinate loss `α·(-log q̃) + w·(y - ȳ)²`.
pub fn grad_combined(y: f64, samples: &[f64], cfg: &ObjectiveConfig) -> Result<Vec<f64>> {
    let nll = grad_samples_nll(y, samples, cfg)?;
    let mm = grad_samples_mm(y, samples);
    Ok(nll
        .iter()
        .zip(&mm)
        .map(|(a, b)| cfg.alpha * a + cfg.mm_weight * b)
        .collect())
}

fn check_target(y: &Tensor, ens: &ForecastEnsemble) -> Result<(usize, usize, usize)> {
    let (k, l, c) = ens.samples.dims3()?;
    if y.shape() != [l, c] {
        return Err(PpmError::shape(
            "objective",
            format!("target {:?} vs ensemble {:?}", y.shape(), ens.samples.shape()),
        ));
    }
    if k == 0 {
        return Err(PpmError::Empty("ensemble"));
    }
    Ok((k, l, c))
}

fn gather(ens: &ForecastEnsemble, t: usize, c: usize, buf: &mut Vec<f64>) {
    let (k, l, ch) = (ens.k(), ens.horizon(), ens.channels());
    let data = ens.samples.data();
    buf.clear();
    buf.extend((0..k).map(|j| data[(j * l + t) * ch + c]));
}

/// `-(1/CL) Σ log q̃(y_{t,c})`.
pub fn nll_loss(y: &Tensor, ens: &ForecastEnsemble, cfg: &ObjectiveConfig) -> Result<f64> {
    let (_, l, c) = check_target(y, ens)?;
    let mut buf = Vec::new();
    let mut scratch = Vec::new();
    let mut sum = 0.0;
    for t in 0..l {
        for ch in 0..c {
            gather(ens, t, ch, &mut buf);
            sum += kde_core(y.get2(t, ch), &buf, cfg, &mut scratch)?.0;
        }
    }
    Ok(-sum / (l * c) as f64)
}

/// `(1/CL) Σ (y_{t,c} - ȳ_{t,c})²`.
pub fn mm_loss(y: &Tensor, ens: &ForecastEnsemble) -> Result<f64> {
    let (_, l, c) = check_target(y, ens)?;
    let mean = ens.mean();
    let sq: f64 = y
        .data()
        .iter()
        .zip(mean.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / (l * c) as f64)
}

/// `total = α·nll + w·mm`.
pub fn total_loss(y: &Tensor, ens: &ForecastEnsemble, cfg: &ObjectiveConfig) -> Result<LossReport> {
    loss_and_grad_impl(y, ens, cfg, false).map(|(r, _)| r)
}

/// Loss report together with `∂total/∂samples`, shaped `[K×L×C]`. Both
/// terms carry the `1/CL` coordinate average.
pub fn loss_and_grad(y: &Tensor, ens: &ForecastEnsemble, cfg: &ObjectiveConfig) -> Result<(LossReport, Tensor)> {
    loss_and_grad_impl(y, ens, cfg, true).map(|(r, g)| (r, g.expect("gradient requested")))
}

fn loss_and_grad_impl(
    y: &Tensor,
    ens: &ForecastEnsemble,
    cfg: &ObjectiveConfig,
    with_grad: bool,
) -> Result<(LossReport, Option<Tensor>)> {
    cfg.validate()?;
    let (k, l, c) = check_target(y, ens)?;
    let n = (l * c) as f64;
    let mut grad = with_grad.then(|| Tensor::zeros(&[k, l, c]));
    let mut buf = Vec::with_capacity(k);
    let mut resp = Vec::with_capacity(k);
    let mut g = vec![0.0; k];
    let (mut nll, mut mm, mut floored) = (0.0, 0.0, 0usize);
    for t in 0..l {
        for ch in 0..c {
            let target = y.get2(t, ch);
            gather(ens, t, ch, &mut buf);
            let (log_q, _, is_floored) = kde_core(target, &buf, cfg, &mut resp)?;
            let mean = buf.iter().sum::<f64>() / k as f64;
            nll -= log_q;
            mm += (target - mean) * (target - mean);
            floored += usize::from(is_floored);
            if let Some(grad) = grad.as_mut() {
                if is_floored {
                    g.fill(0.0);
                } else {
                    nll_grad_from_resp(target, &buf, &resp, cfg, &mut g);
                }
                let dense = cfg.mm_weight * 2.0 * (mean - target) / k as f64;
                let data = grad.data_mut();
                for (j, gj) in g.iter().enumerate() {
                    data[(j * l + t) * c + ch] = (cfg.alpha * gj + dense) / n;
                }
            }
        }
    }
    let nll = nll / n;
    let mm = mm / n;
    let report = LossReport {
        nll,
        mm,
        total: cfg.alpha * nll + cfg.mm_weight * mm,
        floor_fraction: floored as f64 / n,
    };
    Ok((report, grad))
}
