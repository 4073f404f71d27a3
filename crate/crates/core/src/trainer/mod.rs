//! Mini-batch training with Adam and early stopping on validation loss.
//!
//! Each training step runs the whole pipeline per window: encode the
//! history into prior statistics, draw `K` reparameterized latents, push
//! them through the map, score the ensemble, and chain the sample gradients
//! back to every parameter. Windows in a batch are processed in parallel;
//! their gradients are summed in window order so results do not depend on
//! the thread count.

mod adam;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};

use crate::data::WindowSet;
use crate::error::{PpmError, Result};
use crate::model::{ParamStore, PpmModel};
use crate::numerics::RngState;
use crate::objective::{loss_and_grad, total_loss, LossReport, ObjectiveConfig};

const SHUFFLE_STREAM: u64 = 0x5bff;
const TRAIN_NOISE_STREAM: u64 = 0x7a11;
const VAL_NOISE_STREAM: u64 = 0x7a12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Ensemble size during training and validation.
    #[serde(default = "default_k")]
    pub k_train: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Rescale the batch gradient to at most this norm. Off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    /// Cap on optimizer steps per epoch; windows past the cap are skipped
    /// for that epoch (they are reshuffled every epoch).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_batches_per_epoch: Option<usize>,
    /// Score only every n-th validation window.
    #[serde(default = "one")]
    pub val_thin: usize,
}

fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-4
}
fn default_max_epochs() -> usize {
    30
}
fn default_patience() -> usize {
    5
}
fn default_k() -> usize {
    100
}
fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: default_batch(),
            learning_rate: default_lr(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            k_train: default_k(),
            seed: 0,
            adam: AdamConfig::default(),
            clip_norm: None,
            max_batches_per_epoch: None,
            val_thin: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PpmError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return bad(format!(
                "need 0 < patience < max_epochs, got patience {} and max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if self.k_train < 2 {
            return bad(format!("k_train must be at least 2, got {}", self.k_train));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        if self.max_batches_per_epoch == Some(0) || self.val_thin == 0 {
            return bad("max_batches_per_epoch and val_thin must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub nll: f64,
    pub mm: f64,
    pub total: f64,
    pub floor_fraction: f64,
}

impl EpochRecord {
    fn new(epoch: usize, split: Split, r: LossReport) -> Self {
        EpochRecord {
            epoch,
            split,
            nll: r.nll,
            mm: r.mm,
            total: r.total,
            floor_fraction: r.floor_fraction,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_total: f64,
    pub stopped_early: bool,
    /// Optimizer steps taken.
    pub steps: u64,
}

impl TrainLog {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn epochs_run(&self) -> usize {
        self.split(Split::Validation).count()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| PpmError::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| PpmError::io(path, e))
    }
}

/// Patience counter on a quantity to minimize.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Record a value; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    /// True once `patience` evaluations in a row failed to improve.
    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Mean validation loss with noise fixed per window, so epochs are compared
/// on the same draws.
pub fn validation_loss(model: &PpmModel, windows: &WindowSet, k: usize, seed: u64, obj: &ObjectiveConfig) -> Result<LossReport> {
    if windows.is_empty() {
        return Err(PpmError::Empty("validation windows"));
    }
    let reports: Vec<LossReport> = (0..windows.len())
        .into_par_iter()
        .map(|i| {
            let w = windows.get(i);
            let mut rng = RngState::substream(seed, &[VAL_NOISE_STREAM, i as u64]);
            let ens = model.forecast(&w.history, k, &mut rng)?;
            total_loss(&w.target, &ens, obj)
        })
        .collect::<Result<_>>()?;
    Ok(LossReport::mean(&reports))
}

/// Train in place and leave the best-validation parameters in `model`.
pub fn train(
    model: &mut PpmModel,
    train: &WindowSet,
    val: &WindowSet,
    cfg: &TrainConfig,
    obj: &ObjectiveConfig,
) -> Result<TrainLog> {
    train_with(model, train, val, cfg, obj, |_| {})
}

/// [`train`] with a callback invoked on every log record as it is produced.
pub fn train_with(
    model: &mut PpmModel,
    train: &WindowSet,
    val: &WindowSet,
    cfg: &TrainConfig,
    obj: &ObjectiveConfig,
    mut on_record: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    obj.validate()?;
    if train.is_empty() {
        return Err(PpmError::Empty("training windows"));
    }
    if val.is_empty() {
        return Err(PpmError::Empty("validation windows"));
    }
    let val = val.thin(cfg.val_thin);
    let mut opt = Adam::new(&model.params, cfg.adam);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: ParamStore = model.params.clone();
    let mut log = TrainLog::default();
    let mut shuffle_rng = RngState::substream(cfg.seed, &[SHUFFLE_STREAM]);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let ceiling = obj.nll_ceiling();

    for epoch in 0..cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        if let Some(cap) = cfg.max_batches_per_epoch {
            batches.truncate(cap);
        }
        let mut epoch_reports = Vec::with_capacity(batches.len());
        for batch in batches {
            let snapshot: &PpmModel = model;
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let w = train.get(i);
                    let mut rng = RngState::substream(cfg.seed, &[TRAIN_NOISE_STREAM, epoch as u64, i as u64]);
                    let ens = snapshot.forward(&w.history, cfg.k_train, &mut rng)?;
                    let (report, grad) = loss_and_grad(&w.target, &ens, obj)?;
                    let grads = snapshot.backward(&ens, &grad)?;
                    Ok((report, grads))
                })
                .collect::<Result<_>>()?;
            let reports: Vec<LossReport> = results.iter().map(|(r, _)| *r).collect();
            let batch_report = LossReport::mean(&reports);
            if !batch_report.total.is_finite() {
                return Err(PpmError::Numeric {
                    message: format!("non-finite training loss at epoch {epoch}, step {}", log.steps),
                    floor_fraction: batch_report.floor_fraction,
                });
            }
            if batch_report.nll > ceiling * (1.0 + 1e-12) {
                return Err(PpmError::Numeric {
                    message: format!("NLL {} above the truncation ceiling {ceiling}", batch_report.nll),
                    floor_fraction: batch_report.floor_fraction,
                });
            }
            model.params.zero_grad();
            for (_, g) in &results {
                model.params.accumulate(g)?;
            }
            model.params.scale_grads(1.0 / batch.len() as f64);
            let norm = model.params.grad_norm();
            if !norm.is_finite() {
                return Err(PpmError::Numeric {
                    message: format!("non-finite gradient at epoch {epoch}, step {}", log.steps),
                    floor_fraction: batch_report.floor_fraction,
                });
            }
            if let Some(c) = cfg.clip_norm {
                if norm > c {
                    model.params.scale_grads(c / norm);
                }
            }
            opt.step(&mut model.params, cfg.learning_rate)?;
            log.steps += 1;
            epoch_reports.push(batch_report);
        }

        let rec = EpochRecord::new(epoch, Split::Train, LossReport::mean(&epoch_reports));
        on_record(&rec);
        log.records.push(rec);

        let v = validation_loss(model, &val, cfg.k_train, cfg.seed, obj)?;
        if !v.total.is_finite() {
            return Err(PpmError::Numeric {
                message: format!("non-finite validation loss at epoch {epoch}"),
                floor_fraction: v.floor_fraction,
            });
        }
        let rec = EpochRecord::new(epoch, Split::Validation, v);
        on_record(&rec);
        log.records.push(rec);
        if stopper.observe(epoch, v.total) {
            best = model.params.clone();
        }
        if stopper.should_stop() {
            log.stopped_early = true;
            break;
        }
    }
    log.best_epoch = stopper.best_epoch();
    log.best_val_total = stopper.best();
    model.params = best;
    model.params.zero_grad();
    Ok(log)
}
