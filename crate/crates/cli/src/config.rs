//! Run configuration files. A run is described by one TOML file with
//! `[data]`, `[model]`, `[train]`, `[objective]`, `[eval]` and `[theory]`
//! sections; the resolved form is echoed into the output directory before
//! any work starts.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use ppm_core::data::{load_csv, synth_heteroscedastic, Dataset, SplitSpec, SynthParams};
use ppm_core::diagnostics::{ScalingConfig, UniversalityConfig};
use ppm_core::metrics::EvalConfig;
use ppm_core::model::ModelConfig;
use ppm_core::numerics::PriorFamily;
use ppm_core::objective::ObjectiveConfig;
use ppm_core::trainer::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Run seed. Model initialization uses it directly, and it replaces the
    /// `seed` keys of `[train]`, `[eval]` and `[theory.*]`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub theory: TheorySection,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// CSV file with an optional leading `date` column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Generate a series instead of reading one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
    #[serde(default = "default_history")]
    pub history: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub split: SplitSpec,
    /// Keep only the first rows of the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rows: Option<usize>,
}

fn default_history() -> usize {
    96
}
fn default_horizon() -> usize {
    192
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            synth: None,
            history: default_history(),
            horizon: default_horizon(),
            split: SplitSpec::default(),
            max_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub rows: usize,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: SynthParams,
}

fn one() -> usize {
    1
}

/// Everything in `ModelConfig` except the shapes, which come from `[data]`
/// and the dataset itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Latent dimension per channel; the horizon when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapper_hidden: Option<usize>,
    #[serde(default)]
    pub prior: PriorFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_sigma: Option<f64>,
}

fn default_hidden() -> usize {
    256
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            latent_dim: None,
            hidden: default_hidden(),
            mapper_hidden: None,
            prior: PriorFamily::Gaussian,
            fixed_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub universality: UniversalityConfig,
    /// Exit with the gate code when the fitted slopes or the W₁ distances
    /// miss their targets.
    #[serde(default = "yes")]
    pub gate: bool,
}

fn yes() -> bool {
    true
}

impl Default for TheorySection {
    fn default() -> Self {
        TheorySection {
            scaling: ScalingConfig::default(),
            universality: UniversalityConfig::default(),
            gate: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg.resolved())
    }

    /// Propagate the run seed into every section that carries its own.
    pub fn resolved(mut self) -> Self {
        self.train.seed = self.seed;
        self.eval.seed = self.seed;
        self.theory.scaling.seed = self.seed;
        self.theory.universality.seed = self.seed;
        self
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Read or generate the series. Exactly one of `path` and `synth` must
    /// be set.
    pub fn dataset(&self) -> anyhow::Result<Dataset> {
        let mut ds = match (&self.data.path, &self.data.synth) {
            (Some(p), None) => load_csv(p).with_context(|| format!("loading {}", p.display()))?,
            (None, Some(s)) => synth_heteroscedastic(s.rows, s.channels, s.seed, s.params).dataset,
            (None, None) => {
                return Err(CliError::Usage("no dataset: set data.path (or --data) or data.synth".into()).into())
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("data.path and data.synth are mutually exclusive".into()).into())
            }
        };
        if let Some(n) = self.data.max_rows {
            ds.truncate(n);
        }
        Ok(ds)
    }

    pub fn model_config(&self, channels: usize) -> ModelConfig {
        let mut m = ModelConfig::new(self.data.history, self.data.horizon, channels);
        m.latent_dim = self.model.latent_dim.unwrap_or(self.data.horizon);
        m.hidden = self.model.hidden;
        m.mapper_hidden = self.model.mapper_hidden;
        m.prior = self.model.prior;
        m.fixed_sigma = self.model.fixed_sigma;
        m
    }
}
