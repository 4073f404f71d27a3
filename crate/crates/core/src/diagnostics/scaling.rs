//! Finite-sample error of the truncated KDE log-density against a known
//! generator.
//!
//! Samples come from `N(0, 1)`, so the exact log-density and its Gaussian
//! smoothing `N(0, 1 + h²)` are both closed-form. The deviation
//! `log q̃ - log q` at a query point splits into a smoothing bias that grows
//! like `h²` and a sampling fluctuation that shrinks like `1/(h√K)`. The
//! experiment measures both on separate axes and fits log-log slopes.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plot::LineChart;
use crate::error::{PpmError, Result};
use crate::numerics::RngState;
use crate::objective::{kde_log_density, KdeKernel, ObjectiveConfig};

const TRIAL_STREAM: u64 = 0x5ca1;
const BOOT_STREAM: u64 = 0xb007;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    /// Ensemble size of the bias sweep.
    pub bias_k: usize,
    pub bias_bandwidths: Vec<f64>,
    /// Bandwidth of the fluctuation sweep.
    pub fluct_bandwidth: f64,
    pub fluct_ks: Vec<usize>,
    /// Small-K sweep over bandwidths, showing the trade-off between the two
    /// error sources.
    pub tradeoff_k: usize,
    pub tradeoff_bandwidths: Vec<f64>,
    pub query_points: Vec<f64>,
    pub trials: usize,
    pub bootstrap: usize,
    pub floor_eps: f64,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            bias_k: 1_000_000,
            bias_bandwidths: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            fluct_bandwidth: 0.05,
            fluct_ks: vec![100, 1_000, 10_000, 100_000],
            tradeoff_k: 100,
            tradeoff_bandwidths: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8],
            query_points: vec![0.0, 0.5],
            trials: 200,
            bootstrap: 500,
            floor_eps: 1e-12,
            seed: 0,
        }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bias_bandwidths.len() < 4 || self.fluct_ks.len() < 4 {
            return Err(PpmError::InvalidArgument(format!(
                "need at least 4 points per axis to fit a slope, got {} bandwidths and {} ensemble sizes",
                self.bias_bandwidths.len(),
                self.fluct_ks.len()
            )));
        }
        if self.trials < 2 || self.query_points.is_empty() {
            return Err(PpmError::InvalidArgument("need at least 2 trials and one query point".into()));
        }
        if self.bias_bandwidths.iter().chain(&self.tradeoff_bandwidths).chain([&self.fluct_bandwidth]).any(|&h| !(h > 0.0)) {
            return Err(PpmError::InvalidArgument("bandwidths must be positive".into()));
        }
        if self.bias_k == 0 || self.tradeoff_k == 0 || self.fluct_ks.contains(&0) {
            return Err(PpmError::InvalidArgument("ensemble sizes must be positive".into()));
        }
        Ok(())
    }
}

/// `log N(y; 0, var)`.
pub fn gaussian_log_density(y: f64, var: f64) -> f64 {
    -0.5 * (std::f64::consts::TAU * var).ln() - 0.5 * y * y / var
}

/// Summary of one `(K, h)` cell over all trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub k: usize,
    pub h: f64,
    /// `|mean_trials(log q̃ - log q)|`, averaged over query points.
    pub bias: f64,
    /// Standard deviation over trials of `log q̃ - log q`, averaged over
    /// query points.
    pub fluctuation: f64,
    /// `mean_trials |log q̃ - log q|`, averaged over query points.
    pub mean_abs: f64,
    /// Closed-form smoothing bias `|log q_h - log q|`, averaged over query
    /// points.
    pub smoothing_reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRun {
    pub config: ScalingConfig,
    pub bias_cells: Vec<ScalingCell>,
    pub fluct_cells: Vec<ScalingCell>,
    pub tradeoff_cells: Vec<ScalingCell>,
    /// Slope of `bias` against `h` at large `K`.
    pub bias_slope: SlopeFit,
    /// Slope of `fluctuation` against `K` at small `h`.
    pub fluct_slope: SlopeFit,
}

/// Ordinary least squares of `ln y` on `ln x`, returning `(slope, intercept)`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(PpmError::InvalidArgument("need at least two paired points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(PpmError::InvalidArgument("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(PpmError::InvalidArgument("x values must not all be equal".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Deviations `[trial][point]` for one cell.
type Deviations = Vec<Vec<f64>>;

fn summarize(k: usize, h: f64, devs: &Deviations, picks: Option<&[usize]>, points: &[f64]) -> ScalingCell {
    let rows: Vec<&Vec<f64>> = match picks {
        Some(p) => p.iter().map(|&i| &devs[i]).collect(),
        None => devs.iter().collect(),
    };
    let n = rows.len() as f64;
    let np = points.len();
    let (mut bias, mut fluct, mut mean_abs, mut reference) = (0.0, 0.0, 0.0, 0.0);
    for (j, &y) in points.iter().enumerate() {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
        bias += m.abs();
        fluct += var.sqrt();
        mean_abs += rows.iter().map(|r| r[j].abs()).sum::<f64>() / n;
        reference += (gaussian_log_density(y, 1.0 + h * h) - gaussian_log_density(y, 1.0)).abs();
    }
    let np = np as f64;
    ScalingCell {
        k,
        h,
        bias: bias / np,
        fluctuation: fluct / np,
        mean_abs: mean_abs / np,
        smoothing_reference: reference / np,
    }
}

/// Run `trials` independent draws of `K` standard-normal samples and record
/// the truncated KDE log-density error at each query point for every
/// bandwidth. Returns `[h][trial][point]`.
fn run_trials(k: usize, hs: &[f64], cfg: &ScalingConfig, tag: u64) -> Result<Vec<Deviations>> {
    let per_trial: Vec<Vec<Vec<f64>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = RngState::substream(cfg.seed, &[TRIAL_STREAM, tag, k as u64, trial as u64]);
            let samples: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
            hs.iter()
                .map(|&h| {
                    let obj = ObjectiveConfig {
                        bandwidth: h,
                        floor_eps: cfg.floor_eps,
                        kernel: KdeKernel::Gaussian,
                        ..ObjectiveConfig::default()
                    };
                    cfg.query_points
                        .iter()
                        .map(|&y| Ok(kde_log_density(y, &samples, &obj)?.log_q - gaussian_log_density(y, 1.0)))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    // regroup as [h][trial][point]
    Ok((0..hs.len())
        .map(|hi| per_trial.iter().map(|t| t[hi].clone()).collect())
        .collect())
}

fn bootstrap_slope(
    xs: &[f64],
    devs: &[Deviations],
    cells: impl Fn(&[Deviations], Option<&[usize]>) -> Vec<f64>,
    cfg: &ScalingConfig,
    tag: u64,
) -> Result<SlopeFit> {
    let (slope, intercept) = fit_loglog(xs, &cells(devs, None))?;
    let mut rng = RngState::substream(cfg.seed, &[BOOT_STREAM, tag]);
    let mut slopes = Vec::with_capacity(cfg.bootstrap);
    for _ in 0..cfg.bootstrap {
        let picks: Vec<usize> = (0..cfg.trials).map(|_| rng.below(cfg.trials)).collect();
        if let Ok((s, _)) = fit_loglog(xs, &cells(devs, Some(&picks))) {
            slopes.push(s);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if slopes.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            crate::metrics::quantile_sorted(&slopes, 0.025),
            crate::metrics::quantile_sorted(&slopes, 0.975),
        )
    };
    Ok(SlopeFit { slope, intercept, ci_low, ci_high })
}

pub fn nll_scaling_experiment(cfg: &ScalingConfig) -> Result<ScalingRun> {
    cfg.validate()?;
    let pts = &cfg.query_points;

    let bias_devs = run_trials(cfg.bias_k, &cfg.bias_bandwidths, cfg, 1)?;
    let bias_cells: Vec<ScalingCell> = cfg
        .bias_bandwidths
        .iter()
        .zip(&bias_devs)
        .map(|(&h, d)| summarize(cfg.bias_k, h, d, None, pts))
        .collect();
    let bias_slope = bootstrap_slope(
        &cfg.bias_bandwidths,
        &bias_devs,
        |devs, picks| {
            devs.iter()
                .zip(&cfg.bias_bandwidths)
                .map(|(d, &h)| summarize(cfg.bias_k, h, d, picks, pts).bias)
                .collect()
        },
        cfg,
        1,
    )?;

    let h = cfg.fluct_bandwidth;
    let mut fluct_devs = Vec::with_capacity(cfg.fluct_ks.len());
    for &k in &cfg.fluct_ks {
        fluct_devs.push(run_trials(k, &[h], cfg, 2)?.remove(0));
    }
    let fluct_cells: Vec<ScalingCell> = cfg
        .fluct_ks
        .iter()
        .zip(&fluct_devs)
        .map(|(&k, d)| summarize(k, h, d, None, pts))
        .collect();
    let ks: Vec<f64> = cfg.fluct_ks.iter().map(|&k| k as f64).collect();
    let fluct_slope = bootstrap_slope(
        &ks,
        &fluct_devs,
        |devs, picks| {
            devs.iter()
                .zip(&cfg.fluct_ks)
                .map(|(d, &k)| summarize(k, h, d, picks, pts).fluctuation)
                .collect()
        },
        cfg,
        2,
    )?;

    let trade_devs = run_trials(cfg.tradeoff_k, &cfg.tradeoff_bandwidths, cfg, 3)?;
    let tradeoff_cells = cfg
        .tradeoff_bandwidths
        .iter()
        .zip(&trade_devs)
        .map(|(&h, d)| summarize(cfg.tradeoff_k, h, d, None, pts))
        .collect();

    Ok(ScalingRun {
        config: cfg.clone(),
        bias_cells,
        fluct_cells,
        tradeoff_cells,
        bias_slope,
        fluct_slope,
    })
}

impl ScalingRun {
    /// Writes `scaling_grid.csv`, `scaling_slopes.csv` and one SVG per sweep.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let grid = dir.join("scaling_grid.csv");
        let mut w = csv::Writer::from_path(&grid).map_err(|e| PpmError::Data(format!("{}: {e}", grid.display())))?;
        let wrap = |e: csv::Error| PpmError::Data(e.to_string());
        w.write_record(["regime", "k", "h", "bias", "fluctuation", "mean_abs", "smoothing_reference"])
            .map_err(wrap)?;
        for (regime, cells) in [("bias", &self.bias_cells), ("fluctuation", &self.fluct_cells), ("tradeoff", &self.tradeoff_cells)] {
            for c in cells {
                w.write_record([
                    regime.to_string(),
                    c.k.to_string(),
                    format!("{:?}", c.h),
                    format!("{:?}", c.bias),
                    format!("{:?}", c.fluctuation),
                    format!("{:?}", c.mean_abs),
                    format!("{:?}", c.smoothing_reference),
                ])
                .map_err(wrap)?;
            }
        }
        w.flush().map_err(|e| PpmError::io(&grid, e))?;

        let slopes = dir.join("scaling_slopes.csv");
        let mut w = csv::Writer::from_path(&slopes).map_err(|e| PpmError::Data(format!("{}: {e}", slopes.display())))?;
        w.write_record(["fit", "slope", "ci_low", "ci_high"]).map_err(wrap)?;
        for (name, f) in [("bias_vs_h", self.bias_slope), ("fluctuation_vs_k", self.fluct_slope)] {
            w.write_record([name.to_string(), format!("{:?}", f.slope), format!("{:?}", f.ci_low), format!("{:?}", f.ci_high)])
                .map_err(wrap)?;
        }
        w.flush().map_err(|e| PpmError::io(&slopes, e))?;

        let bias_pts: Vec<(f64, f64)> = self.bias_cells.iter().map(|c| (c.h, c.bias)).collect();
        let ref_pts: Vec<(f64, f64)> = self.bias_cells.iter().map(|c| (c.h, c.smoothing_reference)).collect();
        LineChart::new("Smoothing bias of the truncated KDE log-density", "bandwidth h", "|mean deviation|")
            .log_log()
            .line(&format!("measured, K = {}", self.config.bias_k), bias_pts)
            .dashed("closed form |log q_h - log q|", ref_pts)
            .save(dir.join("scaling_bias.svg"))?;
        let fl_pts: Vec<(f64, f64)> = self.fluct_cells.iter().map(|c| (c.k as f64, c.fluctuation)).collect();
        LineChart::new("Finite-K fluctuation", "ensemble size K", "std of deviation")
            .log_log()
            .line(&format!("h = {}", self.config.fluct_bandwidth), fl_pts)
            .save(dir.join("scaling_fluctuation.svg"))?;
        let tr_pts: Vec<(f64, f64)> = self.tradeoff_cells.iter().map(|c| (c.h, c.mean_abs)).collect();
        LineChart::new("Bandwidth trade-off", "bandwidth h", "mean |deviation|")
            .log_log()
            .line(&format!("K = {}", self.config.tradeoff_k), tr_pts)
            .save(dir.join("scaling_tradeoff.svg"))
    }
}
