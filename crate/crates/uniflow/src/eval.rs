//! Metrics and experimental protocols: short/long-term prediction,
//! zero/few-shot transfer, noise robustness, memory ablations, retrieval
//! case studies, and the history-average baseline.
//!
//! All reported errors are computed on denormalized values and only over
//! the prediction horizon.

use crate::data::TaskSpec;
use crate::error::{Error, Result};
use crate::linalg::Scalar;
use crate::model::Model;
use crate::prepared::PreparedDataset;
use crate::rng::{derive_seed, Stream};
use crate::train::{finetune_fewshot, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub dataset: String,
    pub protocol: String,
    pub rmse: f64,
    pub mae: f64,
    pub horizon: usize,
    /// Number of evaluated windows (per channel).
    pub steps: usize,
    pub seed: u64,
}

impl EvalReport {
    fn new(
        dataset: &str,
        protocol: &str,
        rmse: f64,
        mae: f64,
        horizon: usize,
        steps: usize,
        seed: u64,
    ) -> Self {
        assert!(rmse >= 0.0 && mae >= 0.0, "metrics must be non-negative");
        // quadratic mean dominates arithmetic mean on the same sample set
        assert!(
            rmse >= mae - 1e-9,
            "rmse {rmse} < mae {mae} violates the power-mean ordering"
        );
        EvalReport {
            dataset: dataset.to_string(),
            protocol: protocol.to_string(),
            rmse,
            mae,
            horizon,
            steps,
            seed,
        }
    }
}

/// Root mean squared error over two equally shaped slices.
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let sse: f64 = pred
        .iter()
        .zip(actual)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Mean absolute error over two equally shaped slices.
pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let sae: f64 = pred.iter().zip(actual).map(|(a, b)| (a - b).abs()).sum();
    Ok(sae / pred.len() as f64)
}

fn check_pair(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::Shape(format!(
            "metric inputs differ in length: {} vs {}",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("metric inputs are empty".into()));
    }
    Ok(())
}

/// Error sums over the horizon steps of one window; history entries of
/// `pred` are never read.
pub fn horizon_errors(
    pred: &[f64],
    target: &[f64],
    task: &TaskSpec,
    n: usize,
) -> (f64, f64, usize) {
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut count = 0;
    for t in task.history_len..task.window_len() {
        for loc in 0..n {
            let d = pred[t * n + loc] - target[t * n + loc];
            sse += d * d;
            sae += d.abs();
            count += 1;
        }
    }
    (sse, sae, count)
}

// --- history average ---------------------------------------------------------

/// Predicts each horizon step as the mean of history values at the same
/// phase modulo `period`; falls back to the plain history mean when the
/// history is shorter than one period. `window` is `T' x N` raw values;
/// only the history part is read. Returns `P x N` predictions.
pub fn history_average(window: &[f32], task: &TaskSpec, n: usize, period: usize) -> Vec<f64> {
    let h = task.history_len;
    let p = task.horizon_len;
    let mut out = vec![0.0f64; p * n];
    if period == 0 || period > h {
        // plain history mean per location
        for loc in 0..n {
            let mut acc = 0.0;
            for t in 0..h {
                acc += window[t * n + loc] as f64;
            }
            let mean = acc / h as f64;
            for i in 0..p {
                out[i * n + loc] = mean;
            }
        }
        return out;
    }
    for loc in 0..n {
        for i in 0..p {
            let phase = (h + i) % period;
            let mut acc = 0.0;
            let mut count = 0;
            let mut t = phase;
            while t < h {
                acc += window[t * n + loc] as f64;
                count += 1;
                t += period;
            }
            out[i * n + loc] = acc / count as f64;
        }
    }
    out
}

// --- protocols ----------------------------------------------------------------

/// Accumulated prediction errors over every test window of a dataset.
fn model_test_errors<T: Scalar>(
    model: &Model<T>,
    prep: &PreparedDataset,
    noise: Option<(f64, u64)>,
) -> Result<(f64, f64, usize, usize)> {
    let starts = prep.test_starts()?;
    let n = prep.ds.num_locations;
    let task = prep.task;
    let channels = prep.channels();
    let scale = prep.norm.scale();

    let partials: Vec<(f64, f64, usize)> = starts
        .par_iter()
        .enumerate()
        .map(|(w_idx, &start)| {
            let mut sse = 0.0;
            let mut sae = 0.0;
            let mut count = 0usize;
            for c in 0..channels {
                let mut window: Vec<T> = prep.window_norm(start, c);
                if let Some((level, seed)) = noise {
                    // zero-mean Gaussian with std = level * dataset mean,
                    // applied to the history inputs only (normalized space)
                    let sigma_raw = level * prep.ds.meta.mean;
                    let sigma = sigma_raw / scale;
                    if sigma > 0.0 {
                        let mut rng =
                            Stream::new(derive_seed(seed, (w_idx * channels + c) as u64));
                        for t in 0..task.history_len {
                            for loc in 0..n {
                                window[t * n + loc] +=
                                    T::of_f64(rng.normal_scaled(sigma));
                            }
                        }
                    }
                }
                let (pred, _) = model
                    .forward_window(&window, &prep.ctx(), None)
                    .expect("evaluation forward");
                let pred_denorm: Vec<f64> =
                    pred.iter().map(|&v| prep.norm.denormalize(v.as_f64())).collect();
                let target_raw: Vec<f64> = prep
                    .window_raw(start, c)
                    .iter()
                    .map(|&v| v as f64)
                    .collect();
                let (a, b, k) = horizon_errors(&pred_denorm, &target_raw, &task, n);
                sse += a;
                sae += b;
                count += k;
            }
            (sse, sae, count)
        })
        .collect();

    let (sse, sae, count) = partials
        .into_iter()
        .fold((0.0, 0.0, 0usize), |(a, b, c), (x, y, z)| {
            (a + x, b + y, c + z)
        });
    Ok((sse, sae, count, starts.len()))
}

/// Standard prediction protocol over the test split; the task (12->12 or
/// 64->64) is baked into the prepared dataset.
pub fn protocol_predict<T: Scalar>(
    model: &Model<T>,
    prep: &PreparedDataset,
    protocol: &str,
    seed: u64,
) -> Result<EvalReport> {
    let (sse, sae, count, windows) = model_test_errors(model, prep, None)?;
    Ok(EvalReport::new(
        prep.name(),
        protocol,
        (sse / count as f64).sqrt(),
        sae / count as f64,
        prep.task.horizon_len,
        windows,
        seed,
    ))
}

/// Robustness protocol: Gaussian noise with std = `level` x dataset mean is
/// added to the history inputs at evaluation time; targets stay clean.
pub fn noise_eval<T: Scalar>(
    model: &Model<T>,
    prep: &PreparedDataset,
    level: f64,
    seed: u64,
) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Config(format!("noise level {level} out of range")));
    }
    let noise = if level > 0.0 {
        Some((level, derive_seed(seed, 0x401)))
    } else {
        None
    };
    let (sse, sae, count, windows) = model_test_errors(model, prep, noise)?;
    Ok(EvalReport::new(
        prep.name(),
        &format!("noise_{level}"),
        (sse / count as f64).sqrt(),
        sae / count as f64,
        prep.task.horizon_len,
        windows,
        seed,
    ))
}

/// History-average baseline over the test split.
pub fn protocol_history_average(
    prep: &PreparedDataset,
    period: usize,
    seed: u64,
) -> Result<EvalReport> {
    let starts = prep.test_starts()?;
    let n = prep.ds.num_locations;
    let task = prep.task;
    let channels = prep.channels();
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut count = 0usize;
    for &start in &starts {
        for c in 0..channels {
            let window = prep.window_raw(start, c);
            let ha = history_average(&window, &task, n, period);
            for i in 0..task.horizon_len {
                for loc in 0..n {
                    let d =
                        ha[i * n + loc] - window[(task.history_len + i) * n + loc] as f64;
                    sse += d * d;
                    sae += d.abs();
                    count += 1;
                }
            }
        }
    }
    Ok(EvalReport::new(
        prep.name(),
        "history_average",
        (sse / count as f64).sqrt(),
        sae / count as f64,
        task.horizon_len,
        starts.len(),
        seed,
    ))
}

/// RMSE of the all-zeros predictor on the test horizon (a scale reference
/// for transfer experiments).
pub fn zeros_baseline_rmse(prep: &PreparedDataset) -> Result<f64> {
    let starts = prep.test_starts()?;
    let n = prep.ds.num_locations;
    let task = prep.task;
    let mut sse = 0.0;
    let mut count = 0usize;
    for &start in &starts {
        for c in 0..prep.channels() {
            let window = prep.window_raw(start, c);
            for i in 0..task.horizon_len {
                for loc in 0..n {
                    let y = window[(task.history_len + i) * n + loc] as f64;
                    sse += y * y;
                    count += 1;
                }
            }
        }
    }
    Ok((sse / count as f64).sqrt())
}

// --- transfer -------------------------------------------------------------------

/// Zero-shot plus 5% and 10% few-shot reports on a held-out dataset.
/// Refuses to run when the target appears in the model's training manifest.
pub fn zero_few_shot<T: Scalar>(
    model: &Model<T>,
    target: &PreparedDataset,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    if model.trained_on.iter().any(|n| n == target.name()) {
        return Err(Error::Provenance(format!(
            "target dataset `{}` was part of the training corpus",
            target.name()
        )));
    }
    let mut reports = Vec::new();
    reports.push(protocol_predict(model, target, "zero_shot", seed)?);
    for &fraction in &[0.05f64, 0.10] {
        let mut tuned = model.clone();
        let mut cfg = train_cfg.clone();
        cfg.seed = derive_seed(seed, (fraction * 1000.0) as u64);
        finetune_fewshot(&mut tuned, target, fraction, &cfg)?;
        let label = format!("few_shot_{}", (fraction * 100.0).round() as usize);
        reports.push(protocol_predict(&tuned, target, &label, seed)?);
    }
    Ok(reports)
}

// --- case study -------------------------------------------------------------------

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let na = crate::linalg::norm2(a);
    let nb = crate::linalg::norm2(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Shape("zero-norm signature in cosine".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity between the retrieval signatures of two windows.
pub fn case_study<T: Scalar>(
    model: &Model<T>,
    prep_a: &PreparedDataset,
    start_a: usize,
    prep_b: &PreparedDataset,
    start_b: usize,
) -> Result<f64> {
    let wa: Vec<T> = prep_a.window_norm(start_a, 0);
    let wb: Vec<T> = prep_b.window_norm(start_b, 0);
    let sa = model.retrieval_signature(&wa, &prep_a.ctx())?;
    let sb = model.retrieval_signature(&wb, &prep_b.ctx())?;
    cosine(&sa, &sb)
}

// --- report output -----------------------------------------------------------------

pub fn write_reports_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut out = String::from("dataset,protocol,rmse,mae,horizon,steps,seed\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{},{}\n",
            r.dataset, r.protocol, r.rmse, r.mae, r.horizon, r.steps, r.seed
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_reports_json(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let json = serde_json::to_string_pretty(reports)?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Long-format CSV for sweeps: one row per (config, dataset, metric).
pub fn write_long_csv(path: &Path, rows: &[(String, String, String, f64)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "config,dataset,metric,value").map_err(|e| Error::io(path.display().to_string(), e))?;
    for (config, dataset, metric, value) in rows {
        writeln!(w, "{config},{dataset},{metric},{value:.6}")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn metric_hand_arithmetic() {
        // errors {3, 4}: mae 3.5, rmse sqrt(12.5)
        let pred = vec![3.0, 4.0];
        let actual = vec![0.0, 0.0];
        assert!((mae(&pred, &actual).unwrap() - 3.5).abs() < 1e-12);
        assert!((rmse(&pred, &actual).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        // exact prediction
        assert_eq!(rmse(&pred, &pred).unwrap(), 0.0);
        assert_eq!(mae(&pred, &pred).unwrap(), 0.0);
        // shape errors
        assert!(rmse(&pred, &actual[..1]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn rmse_dominates_mae_on_random_pairs() {
        let mut rng = Stream::new(41);
        for _ in 0..1000 {
            let n = 2 + rng.below(20);
            let a: Vec<f64> = (0..n).map(|_| rng.normal() * 3.0).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.normal() * 3.0).collect();
            let r = rmse(&a, &b).unwrap();
            let m = mae(&a, &b).unwrap();
            assert!(r >= m - 1e-12, "rmse {r} < mae {m}");
        }
    }

    #[test]
    fn history_average_is_exact_on_periodic_signals() {
        let task = TaskSpec::new(12, 6);
        let n = 2;
        let period = 4;
        let mut window = vec![0.0f32; task.window_len() * n];
        for t in 0..task.window_len() {
            for loc in 0..n {
                window[t * n + loc] =
                    ((t % period) as f32 + 1.0) * (loc as f32 + 1.0);
            }
        }
        let ha = history_average(&window, &task, n, period);
        for i in 0..task.horizon_len {
            for loc in 0..n {
                let want = window[(task.history_len + i) * n + loc] as f64;
                assert!((ha[i * n + loc] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn history_average_constant_signal_returns_constant() {
        let task = TaskSpec::new(8, 4);
        let window = vec![2.5f32; task.window_len() * 3];
        for period in [0usize, 2, 4, 100] {
            let ha = history_average(&window, &task, 3, period);
            assert!(ha.iter().all(|&v| (v - 2.5).abs() < 1e-9), "period {period}");
        }
    }

    #[test]
    fn history_average_white_noise_rmse_near_sigma() {
        // fallback branch (period > H): prediction = history mean; the
        // residual RMSE against fresh noise approaches sigma
        let mut rng = Stream::new(3);
        let task = TaskSpec::new(100, 1);
        let sigma = 2.0;
        let mut sse = 0.0;
        let mut count = 0;
        for _ in 0..1000 {
            let window: Vec<f32> = (0..task.window_len())
                .map(|_| (rng.normal() * sigma) as f32)
                .collect();
            let ha = history_average(&window, &task, 1, 500);
            let err = ha[0] - window[100] as f64;
            sse += err * err;
            count += 1;
        }
        let observed = (sse / count as f64).sqrt();
        assert!(
            (observed - sigma).abs() / sigma < 0.10,
            "observed {observed} vs sigma {sigma}"
        );
    }

    #[test]
    fn horizon_errors_ignore_history_entries() {
        let task = TaskSpec::new(2, 2);
        let target = vec![1.0f64, 2.0, 3.0, 4.0];
        let mut pred = target.clone();
        pred[0] = f64::NAN;
        pred[1] = f64::INFINITY;
        let (sse, sae, count) = horizon_errors(&pred, &target, &task, 1);
        assert_eq!((sse, sae, count), (0.0, 0.0, 2));
    }

    #[test]
    fn cosine_identities() {
        let a = vec![0.3, -0.7, 2.0];
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((cosine(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(cosine(&a, &[0.0, 0.0, 0.0]).is_err());
    }
}
