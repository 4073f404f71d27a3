//! Probabilistic and point scores of sample ensembles.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{NormStats, WindowSet};
use crate::error::{PpmError, Result};
use crate::model::{ForecastEnsemble, PpmModel};
use crate::numerics::{RngState, Tensor};

/// Default number of quantile bins for QICE.
pub const QICE_BINS: usize = 10;

/// Stream tag for evaluation noise.
pub const EVAL_STREAM: u64 = 0xE7A1;

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// CRPS of the empirical distribution of `samples` at `y`, via the energy
/// form `E|X - y| - ½E|X - X'|` on sorted samples.
pub fn crps_empirical(y: f64, samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(PpmError::Empty("ensemble"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(crps_sorted(y, &s))
}

pub(crate) fn crps_sorted(y: f64, sorted: &[f64]) -> f64 {
    let k = sorted.len() as f64;
    let abs_err = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / k;
    // Σ_i Σ_j |x_i - x_j| = 2 Σ_i (2i - K - 1) x_(i), 1-based i
    let spread: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - k - 1.0) * x)
        .sum::<f64>();
    (abs_err - spread / (k * k)).max(0.0)
}

/// Running bin counts for QICE.
///
/// Bin edges are the type-7 quantiles at `m/M` of each observation's own
/// ensemble. An observation lands in bin `m` when it lies at or above
/// `m - 1` interior edges and below the next; values under the minimum go
/// to the first bin and values over the maximum to the last.
#[derive(Debug, Clone)]
pub struct QiceAccumulator {
    counts: Vec<u64>,
}

impl QiceAccumulator {
    pub fn new(bins: usize) -> Self {
        QiceAccumulator {
            counts: vec![0; bins.max(1)],
        }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn observations(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Record one observation against its ensemble, returning the 0-based bin.
    pub fn add(&mut self, y: f64, samples: &[f64]) -> Result<usize> {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        self.add_sorted(y, &s)
    }

    pub fn add_sorted(&mut self, y: f64, sorted: &[f64]) -> Result<usize> {
        let m = self.bins();
        if sorted.len() < m {
            return Err(PpmError::InvalidArgument(format!(
                "QICE with {m} bins needs at least {m} samples, got {}",
                sorted.len()
            )));
        }
        let bin = (1..m)
            .filter(|&i| y >= quantile_sorted(sorted, i as f64 / m as f64))
            .count();
        self.counts[bin] += 1;
        Ok(bin)
    }

    pub fn merge(&mut self, other: &QiceAccumulator) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// `(1/M) Σ |r_m - 1/M|`, evaluated as `Σ |M·c_m - n| / (M²·n)` in
    /// integers so that only the final division rounds.
    pub fn value(&self) -> f64 {
        let n = self.observations() as i128;
        let m = self.bins() as i128;
        if n == 0 {
            return 0.0;
        }
        let num: i128 = self.counts.iter().map(|&c| (m * c as i128 - n).abs()).sum();
        num as f64 / (m * m * n) as f64
    }
}

/// Quantile interval calibration error over paired observations and
/// ensembles.
pub fn qice<S: AsRef<[f64]>>(observations: &[f64], ensembles: &[S], bins: usize) -> Result<f64> {
    if observations.len() != ensembles.len() {
        return Err(PpmError::shape(
            "qice",
            format!("{} observations, {} ensembles", observations.len(), ensembles.len()),
        ));
    }
    let mut acc = QiceAccumulator::new(bins);
    for (&y, e) in observations.iter().zip(ensembles) {
        acc.add(y, e.as_ref())?;
    }
    Ok(acc.value())
}

/// MSE and MAE of the ensemble mean against the target, averaged over every
/// coordinate of every window.
pub fn point_metrics(targets: &[Tensor], ensembles: &[ForecastEnsemble]) -> Result<(f64, f64)> {
    if targets.len() != ensembles.len() {
        return Err(PpmError::shape(
            "point_metrics",
            format!("{} targets, {} ensembles", targets.len(), ensembles.len()),
        ));
    }
    let (mut se, mut ae, mut n) = (0.0, 0.0, 0usize);
    for (y, e) in targets.iter().zip(ensembles) {
        let mean = e.mean();
        if mean.shape() != y.shape() {
            return Err(PpmError::shape(
                "point_metrics",
                format!("target {:?} vs ensemble mean {:?}", y.shape(), mean.shape()),
            ));
        }
        for (a, b) in y.data().iter().zip(mean.data()) {
            se += (a - b) * (a - b);
            ae += (a - b).abs();
        }
        n += y.len();
    }
    if n == 0 {
        return Err(PpmError::Empty("point_metrics"));
    }
    Ok((se / n as f64, ae / n as f64))
}

/// Scores over a set of test windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub crps: f64,
    /// Fraction in `[0, 1]`; see [`qice_percent`](Self::qice_percent).
    pub qice: f64,
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
    pub k_eval: usize,
}

impl MetricsReport {
    pub fn qice_percent(&self) -> f64 {
        100.0 * self.qice
    }

    /// Flat `key=value` lines.
    pub fn to_record(&self) -> String {
        format!(
            "crps={:?}\nqice={:?}\nqice_percent={:?}\nmse={:?}\nmae={:?}\nn_windows={}\nk_eval={}\n",
            self.crps,
            self.qice,
            self.qice_percent(),
            self.mse,
            self.mae,
            self.n_windows,
            self.k_eval
        )
    }

    pub fn write_record(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_record()).map_err(|e| PpmError::io(path, e))
    }

    /// Append a row to a CSV results table, writing the header on creation.
    pub fn append_row(&self, path: impl AsRef<Path>, label: &str) -> Result<()> {
        let path = path.as_ref();
        let fresh = !path.exists();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| PpmError::io(path, e))?;
        let mut out = String::new();
        if fresh {
            out.push_str("label,crps,qice_percent,mse,mae,n_windows,k_eval\n");
        }
        out.push_str(&format!(
            "{label},{:?},{:?},{:?},{:?},{},{}\n",
            self.crps,
            self.qice_percent(),
            self.mse,
            self.mae,
            self.n_windows,
            self.k_eval
        ));
        f.write_all(out.as_bytes()).map_err(|e| PpmError::io(path, e))
    }
}

/// Evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_k_eval")]
    pub k_eval: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub seed: u64,
    /// Score on the original data scale instead of the z-scored one.
    #[serde(default)]
    pub denormalize: bool,
}

fn default_k_eval() -> usize {
    100
}
fn default_bins() -> usize {
    QICE_BINS
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_eval: default_k_eval(),
            bins: default_bins(),
            seed: 0,
            denormalize: false,
        }
    }
}

/// Noise stream for evaluating window `i`.
pub fn eval_stream(seed: u64, window: usize) -> RngState {
    RngState::substream(seed, &[EVAL_STREAM, window as u64])
}

struct WindowScore {
    crps: f64,
    se: f64,
    ae: f64,
    coords: usize,
    qice: QiceAccumulator,
}

/// Forecast every window with `k_eval` samples and score it. Windows are
/// scored in parallel and reduced in window order.
pub fn evaluate(
    model: &PpmModel,
    windows: &WindowSet,
    cfg: &EvalConfig,
    stats: Option<&NormStats>,
) -> Result<MetricsReport> {
    if windows.is_empty() {
        return Err(PpmError::Empty("evaluation windows"));
    }
    if cfg.k_eval < cfg.bins {
        return Err(PpmError::InvalidArgument(format!(
            "k_eval = {} is below the {} QICE bins",
            cfg.k_eval, cfg.bins
        )));
    }
    let scores: Vec<WindowScore> = (0..windows.len())
        .into_par_iter()
        .map(|i| {
            let w = windows.get(i);
            let ens = model.forecast(&w.history, cfg.k_eval, &mut eval_stream(cfg.seed, i))?;
            let (ens, target) = match (cfg.denormalize, stats) {
                (true, Some(s)) => (
                    ForecastEnsemble::from_samples(s.denormalize(&ens.samples)?)?,
                    s.denormalize(&w.target)?,
                ),
                _ => (ens, w.target),
            };
            score_window(&target, &ens, cfg.bins)
        })
        .collect::<Result<_>>()?;
    let mut crps = 0.0;
    let (mut se, mut ae, mut n) = (0.0, 0.0, 0usize);
    let mut q = QiceAccumulator::new(cfg.bins);
    for s in &scores {
        crps += s.crps;
        se += s.se;
        ae += s.ae;
        n += s.coords;
        q.merge(&s.qice);
    }
    let n = n as f64;
    Ok(MetricsReport {
        crps: crps / n,
        qice: q.value(),
        mse: se / n,
        mae: ae / n,
        n_windows: windows.len(),
        k_eval: cfg.k_eval,
    })
}

fn score_window(target: &Tensor, ens: &ForecastEnsemble, bins: usize) -> Result<WindowScore> {
    let (l, c) = target.dims2()?;
    let mut out = WindowScore {
        crps: 0.0,
        se: 0.0,
        ae: 0.0,
        coords: l * c,
        qice: QiceAccumulator::new(bins),
    };
    for t in 0..l {
        for ch in 0..c {
            let y = target.get2(t, ch);
            let mut s = ens.coordinate(t, ch);
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            s.sort_by(f64::total_cmp);
            out.crps += crps_sorted(y, &s);
            out.qice.add_sorted(y, &s)?;
            out.se += (y - mean) * (y - mean);
            out.ae += (y - mean).abs();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_cdf;
    use proptest::prelude::*;

    fn gaussian_crps(y: f64, mu: f64, sigma: f64) -> f64 {
        let z = (y - mu) / sigma;
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * pdf - 1.0 / std::f64::consts::PI.sqrt())
    }

    /// ∫ (F̂(z) - 1{y ≤ z})² dz by a fine midpoint rule.
    fn crps_quadrature(y: f64, s: &[f64]) -> f64 {
        let lo = s.iter().copied().fold(y, f64::min) - 1.0;
        let hi = s.iter().copied().fold(y, f64::max) + 1.0;
        let n = 200_000;
        let dz = (hi - lo) / n as f64;
        (0..n)
            .map(|i| {
                let z = lo + (i as f64 + 0.5) * dz;
                let f = s.iter().filter(|&&x| x <= z).count() as f64 / s.len() as f64;
                let step = if y <= z { 1.0 } else { 0.0 };
                (f - step).powi(2) * dz
            })
            .sum()
    }

    #[test]
    fn crps_simple_cases() {
        assert_eq!(crps_empirical(1.3, &[1.3, 1.3, 1.3]).unwrap(), 0.0);
        assert!((crps_empirical(0.5, &[2.0, 2.0]).unwrap() - 1.5).abs() < 1e-15);
        assert!((crps_empirical(0.0, &[0.0, 1.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(crps_empirical(0.0, &[]).is_err());
    }

    #[test]
    fn crps_energy_form_matches_quadrature() {
        let mut rng = RngState::new(1);
        for _ in 0..5 {
            let s: Vec<f64> = (0..30).map(|_| rng.standard_normal()).collect();
            let y = rng.standard_normal();
            let a = crps_empirical(y, &s).unwrap();
            let b = crps_quadrature(y, &s);
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn crps_of_gaussian_draws_matches_closed_form() {
        let mut rng = RngState::new(2);
        let (mu, sigma) = (0.4, 1.7);
        let s: Vec<f64> = (0..10_000).map(|_| mu + sigma * rng.standard_normal()).collect();
        for y in [-1.0, 0.4, 2.5] {
            let a = crps_empirical(y, &s).unwrap();
            let b = gaussian_crps(y, mu, sigma);
            assert!((a - b).abs() / b < 0.02);
        }
    }

    #[test]
    fn crps_is_minimized_near_the_median() {
        let mut rng = RngState::new(3);
        let mut s: Vec<f64> = (0..201).map(|_| rng.standard_normal().exp()).collect();
        s.sort_by(f64::total_cmp);
        let median = s[100];
        let y = 0.7;
        // shift the ensemble by d; CRPS as a function of d is minimized where
        // the shifted median sits closest to y
        let grid: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.01).collect();
        let best = grid
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let ca = crps_sorted(y, &s.iter().map(|x| x + a).collect::<Vec<_>>());
                let cb = crps_sorted(y, &s.iter().map(|x| x + b).collect::<Vec<_>>());
                ca.total_cmp(&cb)
            })
            .unwrap();
        assert!((median + best - y).abs() < 0.05, "median shifted to {}", median + best);
    }

    #[test]
    fn qice_all_below_minimum() {
        let ens: Vec<Vec<f64>> = (0..50).map(|i| (0..20).map(|j| (i + j) as f64).collect()).collect();
        let obs: Vec<f64> = (0..50).map(|i| i as f64 - 1.0).collect();
        let v = qice(&obs, &ens, 10).unwrap();
        assert_eq!(v, 0.18);
    }

    #[test]
    fn qice_uniform_bins_is_zero() {
        // K = 11 samples 0..=10: interior edges are exactly 1..=9
        let ens: Vec<f64> = (0..=10).map(f64::from).collect();
        let obs: Vec<f64> = (0..10).map(|i| i as f64 + 0.5).collect();
        let ensembles = vec![ens; 10];
        assert_eq!(qice(&obs, &ensembles, 10).unwrap(), 0.0);
    }

    #[test]
    fn qice_needs_enough_samples() {
        assert!(qice(&[0.0], &[vec![1.0; 5]], 10).is_err());
    }

    #[test]
    fn point_metric_cases() {
        let y = Tensor::from_fn(&[3, 2], |i| i as f64);
        let same = ForecastEnsemble::from_samples(Tensor::from_fn(&[4, 3, 2], |i| (i % 6) as f64)).unwrap();
        assert_eq!(point_metrics(std::slice::from_ref(&y), &[same]).unwrap(), (0.0, 0.0));
        let d = -0.75;
        let off = ForecastEnsemble::from_samples(Tensor::from_fn(&[2, 3, 2], |i| (i % 6) as f64 + d)).unwrap();
        let (mse, mae) = point_metrics(&[y], &[off]).unwrap();
        assert!((mse - d * d).abs() < 1e-15 && (mae - d.abs()).abs() < 1e-15);
    }

    #[test]
    fn point_metrics_match_brute_force() {
        let mut rng = RngState::new(4);
        let (w, k, l, c) = (3, 5, 4, 2);
        let ys: Vec<Tensor> = (0..w).map(|_| Tensor::from_fn(&[l, c], |_| rng.standard_normal())).collect();
        let es: Vec<ForecastEnsemble> = (0..w)
            .map(|_| ForecastEnsemble::from_samples(Tensor::from_fn(&[k, l, c], |_| rng.standard_normal())).unwrap())
            .collect();
        let (mut se, mut ae) = (0.0, 0.0);
        for i in 0..w {
            for t in 0..l {
                for ch in 0..c {
                    let mut m = 0.0;
                    for j in 0..k {
                        m += es[i].samples.data()[(j * l + t) * c + ch];
                    }
                    m /= k as f64;
                    let e = ys[i].get2(t, ch) - m;
                    se += e * e;
                    ae += e.abs();
                }
            }
        }
        let n = (w * l * c) as f64;
        let (mse, mae) = point_metrics(&ys, &es).unwrap();
        assert!((mse - se / n).abs() < 1e-15);
        assert!((mae - ae / n).abs() < 1e-15);
    }

    #[test]
    fn report_record_format() {
        let r = MetricsReport { crps: 0.5, qice: 0.0125, mse: 0.25, mae: 0.5, n_windows: 3, k_eval: 100 };
        let rec = r.to_record();
        assert!(rec.contains("qice_percent=1.25\n"));
        assert!(rec.starts_with("crps=0.5\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn qice_is_invariant_under_increasing_maps(
            seed in any::<u64>(),
            n in 20usize..120,
        ) {
            // K ≡ 1 (mod M) puts every bin edge on an order statistic
            let mut rng = RngState::new(seed);
            let k = 31;
            let obs: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let ens: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.standard_normal()).collect()).collect();
            let f = |x: f64| x.exp() + x.powi(3);
            let obs2: Vec<f64> = obs.iter().map(|&x| f(x)).collect();
            let ens2: Vec<Vec<f64>> = ens.iter().map(|e| e.iter().map(|&x| f(x)).collect()).collect();
            prop_assert_eq!(qice(&obs, &ens, 10).unwrap(), qice(&obs2, &ens2, 10).unwrap());
        }

        #[test]
        fn crps_and_qice_are_bounded(
            y in -3.0f64..3.0,
            s in prop::collection::vec(-3.0f64..3.0, 10..50),
        ) {
            prop_assert!(crps_empirical(y, &s).unwrap() >= 0.0);
            let v = qice(&[y], &[s], 10).unwrap();
            prop_assert!((0.0..=0.18 + 1e-12).contains(&v));
        }
    }
}
