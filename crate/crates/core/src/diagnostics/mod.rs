//! Empirical checks: the finite-sample error law of the KDE likelihood,
//! push-forward expressiveness measured by W₁, and whether a trained model's
//! ensemble spread follows a known time-varying noise scale.

mod plot;
mod scaling;
mod transport;

pub use plot::{Band, LineChart, Series};
pub use scaling::{
    fit_loglog, gaussian_log_density, nll_scaling_experiment, ScalingCell, ScalingConfig, ScalingRun, SlopeFit,
};
pub use transport::{
    fit_push_forward, universality_demo, wasserstein_1d, MixtureSpec, PushForwardMap, TransportReport,
    UniversalityConfig,
};

use rayon::prelude::*;

use crate::data::WindowSet;
use crate::error::{PpmError, Result};
use crate::metrics::eval_stream;
use crate::model::{ForecastEnsemble, PpmModel};

/// Pearson correlation; 0 when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    // relative guard: spreads that are constant up to rounding count as flat
    let tiny = |s: f64, m: f64| s <= 1e-24 * (1.0 + m * m) * n as f64;
    if tiny(saa, ma) || tiny(sbb, mb) {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Per-step ensemble standard deviation of one channel.
pub fn ensemble_std(ens: &ForecastEnsemble, channel: usize) -> Vec<f64> {
    (0..ens.horizon())
        .map(|t| {
            let s = ens.coordinate(t, channel);
            let m = s.iter().sum::<f64>() / s.len() as f64;
            (s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
        })
        .collect()
}

/// Mean over ensembles and channels of the correlation between the ensemble
/// spread and the true scale over the horizon. `truth[i]` is the scale for
/// the horizon of ensemble `i`.
pub fn spread_correlation<T: AsRef<[f64]>>(ensembles: &[ForecastEnsemble], truth: &[T]) -> Result<f64> {
    if ensembles.is_empty() || ensembles.len() != truth.len() {
        return Err(PpmError::InvalidArgument(format!(
            "{} ensembles for {} truth sequences",
            ensembles.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (e, s) in ensembles.iter().zip(truth) {
        for c in 0..e.channels() {
            total += pearson(&ensemble_std(e, c), s.as_ref());
            n += 1;
        }
    }
    Ok(total / n as f64)
}

/// Forecast every window and correlate spread with the stored scale
/// `scale[t]` of the rows being forecast.
pub fn variance_tracking_check(model: &PpmModel, windows: &WindowSet, scale: &[f64], k: usize, seed: u64) -> Result<f64> {
    if windows.is_empty() {
        return Err(PpmError::Empty("windows"));
    }
    let (h, l) = (windows.history_len(), windows.horizon());
    let per_window: Vec<f64> = (0..windows.len())
        .into_par_iter()
        .map(|i| {
            let w = windows.get(i);
            let start = w.origin + h;
            let truth = scale.get(start..start + l).ok_or_else(|| {
                PpmError::InvalidArgument(format!("scale has {} rows, window needs {}", scale.len(), start + l))
            })?;
            let ens = model.forecast(&w.history, k, &mut eval_stream(seed, i))?;
            spread_correlation(&[ens], &[truth])
        })
        .collect::<Result<_>>()?;
    Ok(per_window.iter().sum::<f64>() / per_window.len() as f64)
}
