use std::path::{Path, PathBuf};

use anyhow::Context;

use ppm_core::data::{make_windows, write_forecast_csv, Dataset, ForecastRow, SplitWindows, SynthParams};
use ppm_core::diagnostics::{nll_scaling_experiment, universality_demo, LineChart, MixtureSpec};
use ppm_core::metrics::{eval_stream, evaluate, quantile_sorted};
use ppm_core::model::{Checkpoint, ForecastEnsemble, ModelConfig, PpmModel};
use ppm_core::numerics::Tensor;
use ppm_core::trainer::train_with;

use crate::config::RunConfig;
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.ppm";

/// Create the run directory and record config, seed and version in it.
fn prepare_run(cfg: &RunConfig, command: &str) -> anyhow::Result<PathBuf> {
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    };
    write(&format!("{command}.toml"), cfg.to_toml()?)?;
    write("seed.txt", format!("{}\n", cfg.seed))?;
    write("version.txt", format!("{}\n", crate::VERSION))?;
    Ok(dir)
}

fn windows(cfg: &RunConfig) -> anyhow::Result<(Dataset, SplitWindows)> {
    let ds = cfg.dataset()?;
    let w = make_windows(&ds, cfg.data.history, cfg.data.horizon, &cfg.data.split)?;
    Ok((ds, w))
}

pub fn train(cfg: &RunConfig) -> anyhow::Result<()> {
    let (ds, w) = windows(cfg)?;
    let dir = prepare_run(cfg, "train")?;
    let mut model = PpmModel::new(cfg.model_config(ds.channels()), cfg.seed)?;
    eprintln!(
        "training on {} windows ({} validation), {} parameters",
        w.train.len(),
        w.val.len(),
        model.params.num_scalars()
    );
    let log = train_with(&mut model, &w.train, &w.val, &cfg.train, &cfg.objective, |r| {
        eprintln!(
            "epoch {:>3} {:<10} total {:.6} nll {:.6} mm {:.6}",
            r.epoch,
            format!("{:?}", r.split).to_lowercase(),
            r.total,
            r.nll,
            r.mm
        );
    })?;
    log.write_jsonl(dir.join("train_log.jsonl"))?;
    Checkpoint::from_model(&model, cfg.seed, log.steps).save(dir.join(CHECKPOINT_FILE))?;
    println!(
        "best epoch {} (validation total {:.6}), {} steps{}",
        log.best_epoch,
        log.best_val_total,
        log.steps,
        if log.stopped_early { ", stopped early" } else { "" }
    );
    Ok(())
}

/// Weights from the checkpoint, switches from the run config. The shapes
/// must agree.
fn load_model(cfg: &RunConfig, checkpoint: &Path, channels: usize) -> anyhow::Result<PpmModel> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let want = cfg.model_config(channels);
    let shape = |m: &ModelConfig| (m.history, m.horizon, m.channels, m.latent_dim, m.hidden, m.mapper_width(), m.prior);
    if shape(&ck.config) != shape(&want) {
        return Err(CliError::Usage(format!(
            "checkpoint {} was trained with {:?} but the config asks for {:?} \
             (history, horizon, channels, latent_dim, hidden, mapper width, prior)",
            checkpoint.display(),
            shape(&ck.config),
            shape(&want)
        ))
        .into());
    }
    Ok(PpmModel::from_params(want, ck.params)?)
}

pub struct EvaluateArgs {
    pub checkpoint: Option<PathBuf>,
    /// Write forecasts for every test window rather than one window per
    /// horizon-length block.
    pub all_windows: bool,
}

pub fn evaluate_cmd(cfg: &RunConfig, args: &EvaluateArgs) -> anyhow::Result<()> {
    let (ds, w) = windows(cfg)?;
    let ck = args.checkpoint.clone().unwrap_or_else(|| cfg.output.join(CHECKPOINT_FILE));
    let model = load_model(cfg, &ck, ds.channels())?;
    let dir = prepare_run(cfg, "evaluate")?;
    let stats = cfg.eval.denormalize.then_some(&w.stats);
    let report = evaluate(&model, &w.test, &cfg.eval, stats)?;
    report.write_record(dir.join("metrics.txt"))?;

    // the scored ensembles are regenerated from the same per-window streams
    let l = cfg.data.horizon;
    let picked: Vec<usize> = if args.all_windows {
        (0..w.test.len()).collect()
    } else {
        let origins = w.test.origins();
        let mut next = 0;
        (0..w.test.len())
            .filter(|&i| {
                let keep = origins[i] >= next;
                if keep {
                    next = origins[i] + l;
                }
                keep
            })
            .collect()
    };
    let mut rows = Vec::new();
    let mut first = None;
    for &i in &picked {
        let pair = w.test.get(i);
        let mut ens = model.forecast(&pair.history, cfg.eval.k_eval, &mut eval_stream(cfg.eval.seed, i))?;
        let mut history = pair.history;
        let mut target = pair.target;
        if let Some(s) = stats {
            ens = ForecastEnsemble::from_samples(s.denormalize(&ens.samples)?)?;
            history = s.denormalize(&history)?;
            target = s.denormalize(&target)?;
        }
        let origin = w.test.origins()[i] + cfg.data.history;
        rows.extend(ForecastRow::from_ensemble(origin, &ens));
        if first.is_none() {
            first = Some((history, target, ens));
        }
    }
    write_forecast_csv(dir.join("forecasts.csv"), &rows)?;
    if let Some((history, target, ens)) = first {
        ribbon_chart("first test window, channel 0", &history, Some(&target), &ens, 0).save(dir.join("forecast.svg"))?;
    }
    println!(
        "CRPS {:.4}  QICE {:.3}%  MSE {:.4}  MAE {:.4}  ({} windows, K = {})",
        report.crps,
        report.qice_percent(),
        report.mse,
        report.mae,
        report.n_windows,
        report.k_eval
    );
    Ok(())
}

pub struct ForecastArgs {
    pub checkpoint: Option<PathBuf>,
    pub channel: usize,
}

/// Forecast the horizon that follows the last row of the series.
pub fn forecast(cfg: &RunConfig, args: &ForecastArgs) -> anyhow::Result<()> {
    let (ds, w) = windows(cfg)?;
    if args.channel >= ds.channels() {
        return Err(CliError::Usage(format!("channel {} out of range ({} channels)", args.channel, ds.channels())).into());
    }
    let ck = args.checkpoint.clone().unwrap_or_else(|| cfg.output.join(CHECKPOINT_FILE));
    let model = load_model(cfg, &ck, ds.channels())?;
    let dir = prepare_run(cfg, "forecast")?;
    let (h, c) = (cfg.data.history, ds.channels());
    let rows = ds.rows();
    let tail = Tensor::new(vec![h, c], ds.values.data()[(rows - h) * c..].to_vec())?;
    let history = w.stats.normalize(&tail)?;
    let mut ens = model.forecast(&history, cfg.eval.k_eval, &mut eval_stream(cfg.eval.seed, usize::MAX))?;
    let mut shown = history;
    if cfg.eval.denormalize {
        ens = ForecastEnsemble::from_samples(w.stats.denormalize(&ens.samples)?)?;
        shown = tail;
    }
    write_forecast_csv(dir.join("forecast.csv"), &ForecastRow::from_ensemble(rows, &ens))?;
    ribbon_chart(&format!("forecast after row {rows}, channel {}", args.channel), &shown, None, &ens, args.channel)
        .save(dir.join("forecast.svg"))?;
    println!("wrote {} steps x {} channels to {}", ens.horizon(), c, dir.display());
    Ok(())
}

/// History, optional truth, ensemble mean and 50%/90% bands.
fn ribbon_chart(title: &str, history: &Tensor, target: Option<&Tensor>, ens: &ForecastEnsemble, channel: usize) -> LineChart {
    let h = history.shape()[0] as f64;
    let steps: Vec<f64> = (0..ens.horizon()).map(|t| t as f64).collect();
    let mut q: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for t in 0..ens.horizon() {
        let mut s = ens.coordinate(t, channel);
        s.sort_by(f64::total_cmp);
        for (col, p) in q.iter_mut().zip([0.05, 0.25, 0.75, 0.95]) {
            col.push(quantile_sorted(&s, p));
        }
    }
    let mean = ens.mean();
    let mut chart = LineChart::new(title, "step", "value")
        .band(steps.clone(), q[0].clone(), q[3].clone(), 0.15)
        .band(steps.clone(), q[1].clone(), q[2].clone(), 0.3)
        .line("history", (0..history.shape()[0]).map(|t| (t as f64 - h, history.get2(t, channel))).collect())
        .line("mean", steps.iter().map(|&t| (t, mean.get2(t as usize, channel))).collect());
    if let Some(y) = target {
        chart = chart.dashed("truth", steps.iter().map(|&t| (t, y.get2(t as usize, channel))).collect());
    }
    chart
}

pub struct SynthArgs {
    pub rows: usize,
    pub channels: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub scale_output: Option<PathBuf>,
}

pub fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    if args.rows == 0 || args.channels == 0 {
        return Err(CliError::Usage("rows and channels must be positive".into()).into());
    }
    let s = ppm_core::data::synth_heteroscedastic(args.rows, args.channels, args.seed, SynthParams::default());
    let mut text = s.dataset.channel_names.join(",");
    text.push('\n');
    for row in s.dataset.values.data().chunks(args.channels) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(&args.output, text).with_context(|| format!("writing {}", args.output.display()))?;
    if let Some(p) = &args.scale_output {
        let mut t = String::from("scale\n");
        for v in &s.scale {
            t.push_str(&format!("{v:?}\n"));
        }
        std::fs::write(p, t).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

/// Bias slope 2 ± 0.3, fluctuation slope -0.5 ± 0.15, trained W₁ below 0.15
/// with the best single Gaussian above 0.5.
pub fn theory_check(cfg: &RunConfig) -> anyhow::Result<()> {
    let dir = prepare_run(cfg, "theory-check")?;
    let run = nll_scaling_experiment(&cfg.theory.scaling)?;
    run.write_artifacts(&dir)?;
    let (b, f) = (run.bias_slope, run.fluct_slope);
    println!(
        "bias slope {:.3} [{:.3}, {:.3}], fluctuation slope {:.3} [{:.3}, {:.3}]",
        b.slope, b.ci_low, b.ci_high, f.slope, f.ci_low, f.ci_high
    );
    let report = universality_demo(&MixtureSpec::bimodal(), &cfg.theory.universality)?;
    report.write_artifacts(&dir, cfg.seed)?;
    println!(
        "trained W1 {:.4}, best single Gaussian W1 {:.4}, sampling floor {:.4}",
        report.w1_trained, report.w1_gaussian_fit, report.w1_noise_floor
    );
    let checks = [
        ("bias slope", (b.slope - 2.0).abs() <= 0.3),
        ("fluctuation slope", (f.slope + 0.5).abs() <= 0.15),
        ("trained W1", report.w1_trained < 0.15),
        ("Gaussian W1", report.w1_gaussian_fit > 0.5),
    ];
    let mut text = String::new();
    for (name, ok) in &checks {
        text.push_str(&format!("{name}={}\n", if *ok { "pass" } else { "fail" }));
    }
    std::fs::write(dir.join("theory_gate.txt"), text)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    if cfg.theory.gate && !failed.is_empty() {
        return Err(CliError::Gate(format!("outside target: {}", failed.join(", "))).into());
    }
    Ok(())
}
