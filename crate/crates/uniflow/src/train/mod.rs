//! Joint multi-dataset training: horizon-restricted MSE, Adam with a
//! two-stage learning rate, per-dataset batch sizing (`B = N / K` so every
//! dataset sees a similar number of iterations per epoch), early stopping on
//! mean validation RMSE, and few-shot fine-tuning.

pub mod adam;

use crate::data::TaskSpec;
use crate::error::{Error, Result};
use crate::linalg::Scalar;
use crate::model::Model;
use crate::prepared::{strided_cap, PreparedDataset};
use crate::rng::{derive_seed, Stream};
use adam::{clip_global_norm, Adam};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "d_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_lr_initial")]
    pub lr_initial: f64,
    #[serde(default = "d_lr_late")]
    pub lr_late: f64,
    /// Epoch at which the learning rate drops to `lr_late`.
    #[serde(default = "d_lr_switch")]
    pub lr_switch_epoch: usize,
    #[serde(default = "d_patience")]
    pub early_stop_patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_grad_clip")]
    pub grad_clip: Option<f64>,
    /// Target iterations per dataset per epoch (the K in B = N / K).
    #[serde(default = "d_iters")]
    pub iters_per_epoch: usize,
    /// Cap on validation windows per dataset when monitoring early stopping.
    #[serde(default = "d_val_cap")]
    pub val_window_cap: Option<usize>,
    /// Restore the best-validation parameters when training ends.
    #[serde(default = "d_true")]
    pub restore_best: bool,
}

fn d_max_epochs() -> usize {
    200
}
fn d_lr_initial() -> f64 {
    5e-4
}
fn d_lr_late() -> f64 {
    5e-5
}
fn d_lr_switch() -> usize {
    150
}
fn d_patience() -> usize {
    15
}
fn d_grad_clip() -> Option<f64> {
    Some(1.0)
}
fn d_iters() -> usize {
    25
}
fn d_val_cap() -> Option<usize> {
    Some(128)
}
fn d_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: d_max_epochs(),
            lr_initial: d_lr_initial(),
            lr_late: d_lr_late(),
            lr_switch_epoch: d_lr_switch(),
            early_stop_patience: d_patience(),
            seed: 0,
            grad_clip: d_grad_clip(),
            iters_per_epoch: d_iters(),
            val_window_cap: d_val_cap(),
            restore_best: d_true(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_initial > self.lr_late && self.lr_late > 0.0) {
            return Err(Error::Config(
                "learning rates must satisfy lr_initial > lr_late > 0".into(),
            ));
        }
        if self.iters_per_epoch == 0 {
            return Err(Error::Config("iters_per_epoch must be >= 1".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_switch_epoch {
            self.lr_late
        } else {
            self.lr_initial
        }
    }
}

/// Per-dataset batch sizes targeting K iterations per epoch each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_sizes: Vec<usize>,
    pub k: usize,
}

pub fn make_batch_plan(window_counts: &[usize], k: usize) -> Result<BatchPlan> {
    if window_counts.is_empty() {
        return Err(Error::Config("batch plan needs at least one dataset".into()));
    }
    if k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    let batch_sizes = window_counts
        .iter()
        .map(|&n| ((n as f64 / k as f64).round() as usize).max(1))
        .collect();
    Ok(BatchPlan { batch_sizes, k })
}

/// Mean squared error over the prediction horizon only; history timesteps
/// contribute nothing. Inputs are full `T' x N` fields.
pub fn horizon_mse<T: Scalar>(pred: &[T], target: &[T], task: &TaskSpec, n: usize) -> Result<f64> {
    let total = task.window_len() * n;
    if pred.len() != total || target.len() != total {
        return Err(Error::Shape(format!(
            "horizon_mse expects {} values, got {} and {}",
            total,
            pred.len(),
            target.len()
        )));
    }
    let h = task.history_len;
    let p = task.horizon_len;
    let mut sse = 0.0f64;
    for t in h..h + p {
        for loc in 0..n {
            let d = pred[t * n + loc].as_f64() - target[t * n + loc].as_f64();
            sse += d * d;
        }
    }
    Ok(sse / (p * n) as f64)
}

/// Gradient of `horizon_mse` with respect to the predictions.
pub fn horizon_mse_grad<T: Scalar>(pred: &[T], target: &[T], task: &TaskSpec, n: usize) -> Vec<T> {
    let h = task.history_len;
    let p = task.horizon_len;
    let mut dpred = vec![T::zero(); pred.len()];
    let scale = T::of_f64(2.0 / (p * n) as f64);
    for t in h..h + p {
        for loc in 0..n {
            let i = t * n + loc;
            dpred[i] = scale * (pred[i] - target[i]);
        }
    }
    dpred
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub dataset: String,
    pub loss: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub loss_history: Vec<StepRecord>,
    /// (epoch, mean normalized validation RMSE across datasets)
    pub val_history: Vec<(usize, f64)>,
    pub best_val: f64,
    pub epochs_run: usize,
}

struct TrainItem<'a> {
    prep: &'a PreparedDataset,
    starts: Vec<usize>,
    batch: usize,
}

/// Normalized-space validation RMSE for one dataset (capped window set).
pub fn val_rmse_normalized<T: Scalar>(
    model: &Model<T>,
    prep: &PreparedDataset,
    cap: Option<usize>,
) -> Result<f64> {
    let starts = prep.val_starts()?;
    let starts = match cap {
        Some(c) => strided_cap(&starts, c),
        None => starts,
    };
    let task = prep.task;
    let n = prep.ds.num_locations;
    let channels = prep.channels();
    let sums: Vec<(f64, usize)> = starts
        .par_iter()
        .map(|&start| {
            let mut sse = 0.0;
            let mut count = 0usize;
            for c in 0..channels {
                let window: Vec<T> = prep.window_norm(start, c);
                let (pred, _) = model
                    .forward_window(&window, &prep.ctx(), None)
                    .expect("validation forward");
                for t in task.history_len..task.window_len() {
                    for loc in 0..n {
                        let d = pred[t * n + loc].as_f64() - window[t * n + loc].as_f64();
                        sse += d * d;
                        count += 1;
                    }
                }
            }
            (sse, count)
        })
        .collect();
    let (sse, count) = sums
        .into_iter()
        .fold((0.0, 0usize), |(a, b), (x, y)| (a + x, b + y));
    Ok((sse / count.max(1) as f64).sqrt())
}

fn run_training<T: Scalar>(
    model: &mut Model<T>,
    items: &[TrainItem],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    run_training_hooked(model, items, cfg, |_, _| Ok(()))
}

fn run_training_hooked<T: Scalar>(
    model: &mut Model<T>,
    items: &[TrainItem],
    cfg: &TrainConfig,
    mut hook: impl FnMut(usize, &Model<T>) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut report = TrainReport {
        best_val: f64::INFINITY,
        ..Default::default()
    };
    if items.is_empty() {
        return Err(Error::Config("training needs at least one dataset".into()));
    }
    let n_params = model.store.len();
    let mut optimizer = Adam::new(n_params);
    let mut sampler = Stream::new(cfg.seed);
    let steps_per_epoch = cfg.iters_per_epoch * items.len();

    let mut best_state: Option<Vec<T>> = None;
    let mut patience_used = 0usize;
    let mut global_step = 0usize;

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        for _ in 0..steps_per_epoch {
            global_step += 1;
            let item = &items[sampler.below(items.len())];
            let prep = item.prep;
            let channels = prep.channels();
            let task = prep.task;
            let n = prep.ds.num_locations;

            // sample windows, fold channels into the batch
            let mut picks: Vec<(usize, usize)> = Vec::with_capacity(item.batch * channels);
            for _ in 0..item.batch {
                let start = item.starts[sampler.below(item.starts.len())];
                for c in 0..channels {
                    picks.push((start, c));
                }
            }
            let step_seed = derive_seed(cfg.seed, global_step as u64);

            let results: Vec<(f64, Vec<T>)> = picks
                .par_iter()
                .enumerate()
                .map(|(slot, &(start, c))| {
                    let window: Vec<T> = prep.window_norm(start, c);
                    let mut drop_rng = Stream::new(derive_seed(step_seed, slot as u64));
                    let (pred, cache) = model
                        .forward_window(&window, &prep.ctx(), Some(&mut drop_rng))
                        .expect("training forward");
                    let loss = horizon_mse(&pred, &window, &task, n).expect("loss shapes");
                    let dpred = horizon_mse_grad(&pred, &window, &task, n);
                    let mut grads = vec![T::zero(); n_params];
                    model.backward_window(&prep.ctx(), &cache, &dpred, &mut grads);
                    (loss, grads)
                })
                .collect();

            let batch_len = results.len() as f64;
            let mut grads = vec![T::zero(); n_params];
            let mut loss_sum = 0.0;
            for (loss, g) in &results {
                loss_sum += loss;
                crate::linalg::add_assign(&mut grads, g);
            }
            drop(results);
            let loss = loss_sum / batch_len;
            let inv = T::of_f64(1.0 / batch_len);
            for g in grads.iter_mut() {
                *g *= inv;
            }

            report.loss_history.push(StepRecord {
                step: global_step,
                dataset: prep.name().to_string(),
                loss,
            });
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: global_step,
                    loss,
                });
            }

            if let Some(clip) = cfg.grad_clip {
                clip_global_norm(&mut grads, clip);
            }
            optimizer.step(&mut model.store.values, &grads, lr);
        }

        // early stopping on mean validation RMSE across datasets
        let mut val_sum = 0.0;
        for item in items {
            val_sum += val_rmse_normalized(model, item.prep, cfg.val_window_cap)?;
        }
        let val = val_sum / items.len() as f64;
        report.val_history.push((epoch, val));
        report.epochs_run = epoch + 1;

        hook(epoch, model)?;

        if val < report.best_val {
            report.best_val = val;
            best_state = Some(model.store.values.clone());
            patience_used = 0;
        } else {
            patience_used += 1;
            if patience_used >= cfg.early_stop_patience {
                break;
            }
        }
    }

    if cfg.restore_best {
        if let Some(best) = best_state {
            model.store.values = best;
        }
    }
    Ok(report)
}

/// Joint training over every dataset; each step samples one dataset
/// uniformly at random and draws a B_d-window batch from it.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    datasets: &[PreparedDataset],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_with_hook(model, datasets, cfg, |_, _| Ok(()))
}

/// `train` with a per-epoch callback (checkpointing, progress logging).
pub fn train_with_hook<T: Scalar>(
    model: &mut Model<T>,
    datasets: &[PreparedDataset],
    cfg: &TrainConfig,
    hook: impl FnMut(usize, &Model<T>) -> Result<()>,
) -> Result<TrainReport> {
    let mut counts = Vec::with_capacity(datasets.len());
    let mut starts_all = Vec::with_capacity(datasets.len());
    for prep in datasets {
        let starts = prep.train_starts()?;
        counts.push(starts.len());
        starts_all.push(starts);
    }
    let plan = make_batch_plan(&counts, cfg.iters_per_epoch)?;
    let items: Vec<TrainItem> = datasets
        .iter()
        .zip(starts_all)
        .zip(&plan.batch_sizes)
        .map(|((prep, starts), &batch)| TrainItem {
            prep,
            starts,
            batch,
        })
        .collect();
    let report = run_training_hooked(model, &items, cfg, hook)?;
    model.trained_on = datasets.iter().map(|d| d.name().to_string()).collect();
    Ok(report)
}

/// Fine-tunes all parameters on the first `ceil(fraction * N)` training
/// windows of the target dataset, with the same loss and optimizer.
pub fn finetune_fewshot<T: Scalar>(
    model: &mut Model<T>,
    target: &PreparedDataset,
    fraction: f64,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "few-shot fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let starts = target.train_starts()?;
    let n_use = ((fraction * starts.len() as f64).ceil() as usize).max(1);
    let starts = starts[..n_use.min(starts.len())].to_vec();
    let plan = make_batch_plan(&[starts.len()], cfg.iters_per_epoch)?;
    let items = vec![TrainItem {
        prep: target,
        starts,
        batch: plan.batch_sizes[0],
    }];
    run_training(model, &items, cfg)
}
