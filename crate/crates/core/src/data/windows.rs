use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Dataset, NormStats};
use crate::error::{PpmError, Result};
use crate::numerics::Tensor;

/// Chronological train/validation/test split and window strides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// Relative sizes of train, validation and test, e.g. `[6, 2, 2]`.
    pub ratios: [u32; 3],
    #[serde(default = "one")]
    pub stride_train: usize,
    /// 1, or the horizon length for wide datasets.
    #[serde(default = "one")]
    pub stride_eval: usize,
}

fn one() -> usize {
    1
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [6, 2, 2],
            stride_train: 1,
            stride_eval: 1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.contains(&0) {
            return Err(PpmError::Config(format!("split ratios must be positive: {:?}", self.ratios)));
        }
        if self.stride_train == 0 || self.stride_eval == 0 {
            return Err(PpmError::Config("window strides must be at least 1".into()));
        }
        Ok(())
    }
}

/// Row ranges of the three splits. Train and validation are rounded down;
/// test takes the remainder.
pub fn split_bounds(rows: usize, spec: &SplitSpec) -> [Range<usize>; 3] {
    let total: u64 = spec.ratios.iter().map(|&r| r as u64).sum();
    let n_train = (rows as u64 * spec.ratios[0] as u64 / total) as usize;
    let n_val = (rows as u64 * spec.ratios[1] as u64 / total) as usize;
    [0..n_train, n_train..n_train + n_val, n_train + n_val..rows]
}

/// One history/target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    /// `[H×C]`
    pub history: Tensor,
    /// `[L×C]`
    pub target: Tensor,
    /// First history row, as an index into the full series.
    pub origin: usize,
}

/// Windows of one split, materialized on demand from a shared series.
#[derive(Debug, Clone)]
pub struct WindowSet {
    series: Arc<Tensor>,
    origins: Vec<usize>,
    history: usize,
    horizon: usize,
}

impl WindowSet {
    /// Windows lying entirely inside `rows`, origins `rows.start + i·stride`.
    pub fn new(series: Arc<Tensor>, rows: Range<usize>, history: usize, horizon: usize, stride: usize) -> Result<Self> {
        let span = history + horizon;
        if rows.len() < span {
            return Err(PpmError::Data(format!(
                "split of {} rows is shorter than history + horizon = {span}",
                rows.len()
            )));
        }
        let count = (rows.len() - span) / stride + 1;
        let origins = (0..count).map(|i| rows.start + i * stride).collect();
        Ok(WindowSet {
            series,
            origins,
            history,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn history_len(&self) -> usize {
        self.history
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn channels(&self) -> usize {
        self.series.shape()[1]
    }

    pub fn get(&self, i: usize) -> WindowPair {
        let o = self.origins[i];
        let c = self.channels();
        let data = self.series.data();
        let hist = data[o * c..(o + self.history) * c].to_vec();
        let tgt = data[(o + self.history) * c..(o + self.history + self.horizon) * c].to_vec();
        WindowPair {
            history: Tensor::new(vec![self.history, c], hist).expect("window inside series"),
            target: Tensor::new(vec![self.horizon, c], tgt).expect("window inside series"),
            origin: o,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = WindowPair> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// The windows at the given positions, in the given order.
    pub fn select(&self, positions: &[usize]) -> WindowSet {
        WindowSet {
            series: Arc::clone(&self.series),
            origins: positions.iter().map(|&i| self.origins[i]).collect(),
            history: self.history,
            horizon: self.horizon,
        }
    }

    /// Keep every `n`-th window.
    pub fn thin(&self, n: usize) -> WindowSet {
        let n = n.max(1);
        WindowSet {
            series: Arc::clone(&self.series),
            origins: self.origins.iter().copied().step_by(n).collect(),
            history: self.history,
            horizon: self.horizon,
        }
    }
}

/// Normalized windows for the three splits plus the train statistics.
#[derive(Debug, Clone)]
pub struct SplitWindows {
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub stats: NormStats,
    pub bounds: [Range<usize>; 3],
}

/// Z-score with train-split statistics, then cut windows confined to each
/// split. Train uses `stride_train`, validation and test use `stride_eval`.
pub fn make_windows(ds: &Dataset, history: usize, horizon: usize, split: &SplitSpec) -> Result<SplitWindows> {
    split.validate()?;
    if history == 0 || horizon == 0 {
        return Err(PpmError::Config("history and horizon must be at least 1".into()));
    }
    let bounds = split_bounds(ds.rows(), split);
    let stats = NormStats::fit(&ds.values, bounds[0].clone())?;
    let series = Arc::new(stats.normalize(&ds.values)?);
    let name = ["train", "validation", "test"];
    let mk = |i: usize, stride: usize| {
        WindowSet::new(Arc::clone(&series), bounds[i].clone(), history, horizon, stride)
            .map_err(|e| PpmError::Data(format!("{} split: {e}", name[i])))
    };
    Ok(SplitWindows {
        train: mk(0, split.stride_train)?,
        val: mk(1, split.stride_eval)?,
        test: mk(2, split.stride_eval)?,
        stats,
        bounds,
    })
}
