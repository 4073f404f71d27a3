//! Datasets, chronological splits and sliding windows.

mod csv_io;
mod synth;
mod windows;

use serde::{Deserialize, Serialize};

pub use csv_io::{load_csv, parse_csv, write_forecast_csv, ForecastRow, FORECAST_QUANTILES};
pub use synth::{synth_heteroscedastic, SynthParams, SyntheticSeries};
pub use windows::{make_windows, split_bounds, SplitSpec, SplitWindows, WindowPair, WindowSet};

use crate::error::{PpmError, Result};
use crate::numerics::Tensor;

/// A multivariate series, `values: [T×C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub values: Tensor,
    pub timestamps: Option<Vec<String>>,
    pub channel_names: Vec<String>,
    /// Set once the dataset has been z-scored.
    pub stats: Option<NormStats>,
}

impl Dataset {
    pub fn new(values: Tensor, channel_names: Vec<String>) -> Result<Self> {
        let (_, c) = values.dims2()?;
        if channel_names.len() != c {
            return Err(PpmError::Data(format!(
                "{} channel names for {c} channels",
                channel_names.len()
            )));
        }
        Ok(Dataset {
            values,
            timestamps: None,
            channel_names,
            stats: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[1]
    }

    /// Keep only the first `n` rows.
    pub fn truncate(&mut self, n: usize) {
        if n >= self.rows() {
            return;
        }
        let c = self.channels();
        let data = self.values.data()[..n * c].to_vec();
        self.values = Tensor::new(vec![n, c], data).expect("prefix of a valid tensor");
        if let Some(ts) = &mut self.timestamps {
            ts.truncate(n);
        }
    }
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population mean and standard deviation over `rows`. Constant channels
    /// get a unit scale so normalization stays finite.
    pub fn fit(values: &Tensor, rows: std::ops::Range<usize>) -> Result<Self> {
        let (t, c) = values.dims2()?;
        if rows.is_empty() || rows.end > t {
            return Err(PpmError::Data(format!("cannot fit statistics on rows {rows:?} of {t}")));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; c];
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(values.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; c];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(values.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 { sd } else { 1.0 }
            })
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn normalize(&self, values: &Tensor) -> Result<Tensor> {
        self.apply(values, |v, m, s| (v - m) / s)
    }

    pub fn denormalize(&self, values: &Tensor) -> Result<Tensor> {
        self.apply(values, |v, m, s| v * s + m)
    }

    fn apply(&self, values: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
        let c = *values.shape().last().unwrap_or(&0);
        if c != self.mean.len() {
            return Err(PpmError::shape(
                "NormStats",
                format!("{} channels vs {} statistics", c, self.mean.len()),
            ));
        }
        let mut out = values.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let ch = i % c;
            *v = f(*v, self.mean[ch], self.std[ch]);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn normalize_then_denormalize_is_identity(
            vals in prop::collection::vec(-1e3f64..1e3, 6..60),
        ) {
            let rows = vals.len() / 3;
            let t = Tensor::new(vec![rows, 3], vals[..rows * 3].to_vec()).unwrap();
            let stats = NormStats::fit(&t, 0..rows / 2 + 1).unwrap();
            let back = stats.denormalize(&stats.normalize(&t).unwrap()).unwrap();
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn stats_use_only_requested_rows() {
        let t = Tensor::from_rows(&[vec![1.0], vec![3.0], vec![100.0]]).unwrap();
        let s = NormStats::fit(&t, 0..2).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.std, vec![1.0]);
    }
}
