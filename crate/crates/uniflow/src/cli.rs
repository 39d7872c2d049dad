//! Library side of the command-line surface: run configuration, dataset
//! loading, and one function per subcommand. The binary is a thin argument
//! parser over these.

use crate::data::{load_dataset, save_dataset, TaskSpec};
use crate::error::{Error, Result};
use crate::eval::{
    self, protocol_history_average, protocol_predict, write_long_csv, write_reports_csv,
    write_reports_json, EvalReport,
};
use crate::model::{checkpoint, FullConfig, Model, ModelConfig};
use crate::mra::{MraConfig, BANK_COUNT, BANK_KINDS};
use crate::prepared::PreparedDataset;
use crate::rng::derive_seed;
use crate::synth::gen_suite;
use crate::train::{train_with_hook, StepRecord, TrainConfig};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Unit counts for the memory-size sweep.
pub const UNIT_SWEEP: [usize; 5] = [64, 128, 256, 512, 1024];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directories used for training and evaluation.
    pub datasets: Vec<PathBuf>,
    /// Held-out dataset directory for zero/few-shot evaluation.
    #[serde(default)]
    pub target_dataset: Option<PathBuf>,
    pub patch: crate::patching::PatchConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub mra: MraConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub task: TaskSpec,
    /// Protocols for `eval`: any of "short", "long".
    #[serde(default = "default_protocols")]
    pub protocols: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    /// Checkpoint path; defaults to `<out>/checkpoint_final.ckpt`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Period used by the history-average baseline.
    #[serde(default = "default_ha_period")]
    pub ha_period: usize,
    /// Write an intermediate checkpoint every this many epochs (0 = off).
    #[serde(default)]
    pub checkpoint_every_epochs: usize,
    /// Task used by the long-horizon protocol.
    #[serde(default = "default_long_task")]
    pub long_task: TaskSpec,
}

fn default_protocols() -> Vec<String> {
    vec!["short".to_string()]
}
fn default_ha_period() -> usize {
    12
}
fn default_long_task() -> TaskSpec {
    TaskSpec::new(64, 64)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: RunConfig = serde_json::from_slice(&bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.full_config().validate()?;
        self.train.validate()?;
        for p in &self.datasets {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "dataset path does not exist: {}",
                    p.display()
                )));
            }
        }
        for proto in &self.protocols {
            if proto != "short" && proto != "long" {
                return Err(Error::Config(format!("unknown protocol `{proto}`")));
            }
        }
        Ok(())
    }

    pub fn full_config(&self) -> FullConfig {
        FullConfig {
            patch: self.patch,
            model: self.model,
            mra: self.mra,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("checkpoint_final.ckpt"))
    }

    fn prepare_datasets(&self, task: TaskSpec) -> Result<Vec<PreparedDataset>> {
        self.datasets
            .iter()
            .map(|dir| {
                let ds = load_dataset(dir)?;
                PreparedDataset::prepare(ds, task, &self.patch, Some(dir), self.seed)
            })
            .collect()
    }

    fn prepare_target(&self, task: TaskSpec) -> Result<PreparedDataset> {
        let dir = self
            .target_dataset
            .as_ref()
            .ok_or_else(|| Error::Config("config has no target_dataset".into()))?;
        let ds = load_dataset(dir)?;
        PreparedDataset::prepare(ds, task, &self.patch, Some(dir), self.seed)
    }

    fn snapshot(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = dir.join("config_snapshot.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// `gen`: write the synthetic suite under `out`, one directory per dataset.
pub fn cmd_gen(seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let suite = gen_suite(seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let mut dirs = Vec::new();
    for ds in &suite {
        let dir = out.join(&ds.name);
        save_dataset(ds, &dir)?;
        println!(
            "wrote {:<12} kind={:?} T={} N={} mean={:.3}",
            ds.name, ds.kind, ds.t_len, ds.num_locations, ds.meta.mean
        );
        dirs.push(dir);
    }
    Ok(dirs)
}

fn write_loss_csv(path: &Path, records: &[StepRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "step,dataset,loss").map_err(|e| Error::io(path.display().to_string(), e))?;
    for r in records {
        writeln!(w, "{},{},{:.8}", r.step, r.dataset, r.loss)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_val_csv(path: &Path, history: &[(usize, f64)]) -> Result<()> {
    let mut out = String::from("epoch,val_rmse_normalized\n");
    for (epoch, v) in history {
        out.push_str(&format!("{epoch},{v:.8}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// `train`: joint training on the configured datasets; writes the config
/// snapshot, loss/validation CSVs, and the final checkpoint into `out`.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.snapshot(&cfg.out)?;
    let datasets = cfg.prepare_datasets(cfg.task)?;
    let mut model: Model<f32> = Model::new(cfg.full_config(), cfg.seed)?;
    println!(
        "training on {} datasets, {} parameters",
        datasets.len(),
        model.num_params()
    );
    let every = cfg.checkpoint_every_epochs;
    let out_dir = cfg.out.clone();
    let report = train_with_hook(&mut model, &datasets, &cfg.train, |epoch, m| {
        if every > 0 && (epoch + 1) % every == 0 {
            checkpoint::save(m, &out_dir.join(format!("checkpoint_epoch{:04}.ckpt", epoch + 1)))?;
        }
        Ok(())
    })?;
    write_loss_csv(&cfg.out.join("loss.csv"), &report.loss_history)?;
    write_val_csv(&cfg.out.join("val.csv"), &report.val_history)?;
    let ckpt = cfg.checkpoint_path();
    checkpoint::save(&model, &ckpt)?;
    println!(
        "done: {} epochs, best val rmse {:.5}, checkpoint at {}",
        report.epochs_run,
        report.best_val,
        ckpt.display()
    );
    Ok(ckpt)
}

fn task_for_protocol(cfg: &RunConfig, protocol: &str) -> TaskSpec {
    match protocol {
        "long" => cfg.long_task,
        _ => cfg.task,
    }
}

/// `eval`: model and history-average reports per dataset and protocol,
/// optionally under input noise.
pub fn cmd_eval(cfg: &RunConfig, protocols: &[String], noise: Option<f64>) -> Result<Vec<EvalReport>> {
    let model: Model<f32> = checkpoint::load(&cfg.checkpoint_path())?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(cfg.out.display().to_string(), e))?;
    let mut reports = Vec::new();
    for protocol in protocols {
        let task = task_for_protocol(cfg, protocol);
        let datasets = cfg.prepare_datasets(task)?;
        for prep in &datasets {
            let report = match noise {
                Some(level) if level > 0.0 => {
                    let mut r = eval::noise_eval(&model, prep, level, cfg.seed)?;
                    r.protocol = format!("{protocol}_{}", r.protocol);
                    r
                }
                _ => protocol_predict(&model, prep, protocol, cfg.seed)?,
            };
            let ha = {
                let mut r = protocol_history_average(prep, cfg.ha_period, cfg.seed)?;
                r.protocol = format!("{protocol}_{}", r.protocol);
                r
            };
            println!(
                "{:<12} {:<20} rmse {:>10.4} mae {:>10.4}   (HA rmse {:>10.4})",
                report.dataset, report.protocol, report.rmse, report.mae, ha.rmse
            );
            reports.push(report);
            reports.push(ha);
        }
    }
    write_reports_csv(&cfg.out.join("reports.csv"), &reports)?;
    write_reports_json(&cfg.out.join("reports.json"), &reports)?;
    Ok(reports)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblateMode {
    Units,
    Banks,
}

/// Memory-bank variants for the type ablation: full model, four single-bank
/// removals, and no retrieval at all.
pub fn bank_variants(n_mem: usize) -> Vec<(String, MraConfig)> {
    let mut out = vec![(
        "full".to_string(),
        MraConfig {
            n_mem,
            enabled: [true; BANK_COUNT],
        },
    )];
    for (i, kind) in BANK_KINDS.iter().enumerate() {
        let mut enabled = [true; BANK_COUNT];
        enabled[i] = false;
        out.push((format!("wo_{}", kind.label()), MraConfig { n_mem, enabled }));
    }
    out.push(("wo_mra".to_string(), MraConfig::none()));
    out
}

/// `ablate`: trains one variant per configuration with the configured
/// budget and reports test RMSE/MAE for each (long-format CSV).
pub fn cmd_ablate(cfg: &RunConfig, mode: AblateMode) -> Result<Vec<(String, EvalReport)>> {
    cfg.snapshot(&cfg.out)?;
    let datasets = cfg.prepare_datasets(cfg.task)?;
    let variants: Vec<(String, MraConfig)> = match mode {
        AblateMode::Units => UNIT_SWEEP
            .iter()
            .map(|&n| {
                (
                    format!("units_{n}"),
                    MraConfig {
                        n_mem: n,
                        enabled: [true; BANK_COUNT],
                    },
                )
            })
            .collect(),
        AblateMode::Banks => bank_variants(cfg.mra.n_mem),
    };

    let mut tagged = Vec::new();
    let mut rows = Vec::new();
    for (label, mra) in &variants {
        let mut full = cfg.full_config();
        full.mra = *mra;
        let mut model: Model<f32> = Model::new(full, cfg.seed)?;
        let mut tcfg = cfg.train.clone();
        tcfg.seed = derive_seed(cfg.train.seed, hash_label(label));
        crate::train::train(&mut model, &datasets, &tcfg)?;
        for prep in &datasets {
            let report = protocol_predict(&model, prep, label, cfg.seed)?;
            println!(
                "{:<16} {:<12} rmse {:>10.4} mae {:>10.4}",
                label, report.dataset, report.rmse, report.mae
            );
            rows.push((
                label.clone(),
                report.dataset.clone(),
                "rmse".to_string(),
                report.rmse,
            ));
            rows.push((
                label.clone(),
                report.dataset.clone(),
                "mae".to_string(),
                report.mae,
            ));
            tagged.push((label.clone(), report));
        }
    }
    let name = match mode {
        AblateMode::Units => "ablation_units.csv",
        AblateMode::Banks => "ablation_banks.csv",
    };
    write_long_csv(&cfg.out.join(name), &rows)?;
    Ok(tagged)
}

fn hash_label(label: &str) -> u64 {
    label.bytes().fold(0u64, |acc, b| {
        acc.wrapping_mul(31).wrapping_add(b as u64)
    })
}

/// `shot`: zero-shot plus few-shot reports on the held-out target dataset.
/// When `fraction` is given, only that fine-tuning fraction runs (plus the
/// zero-shot reference).
pub fn cmd_shot(cfg: &RunConfig, fraction: Option<f64>) -> Result<Vec<EvalReport>> {
    let model: Model<f32> = checkpoint::load(&cfg.checkpoint_path())?;
    let target = cfg.prepare_target(cfg.task)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(cfg.out.display().to_string(), e))?;
    let reports = match fraction {
        None => eval::zero_few_shot(&model, &target, &cfg.train, cfg.seed)?,
        Some(f) => {
            if model.trained_on.iter().any(|n| n == target.name()) {
                return Err(Error::Provenance(format!(
                    "target dataset `{}` was part of the training corpus",
                    target.name()
                )));
            }
            let mut reports =
                vec![protocol_predict(&model, &target, "zero_shot", cfg.seed)?];
            let mut tuned = model.clone();
            let mut tcfg = cfg.train.clone();
            tcfg.seed = derive_seed(cfg.seed, (f * 1000.0) as u64);
            crate::train::finetune_fewshot(&mut tuned, &target, f, &tcfg)?;
            let label = format!("few_shot_{}", (f * 100.0).round() as usize);
            reports.push(protocol_predict(&tuned, &target, &label, cfg.seed)?);
            reports
        }
    };
    for r in &reports {
        println!(
            "{:<12} {:<14} rmse {:>10.4} mae {:>10.4}",
            r.dataset, r.protocol, r.rmse, r.mae
        );
    }
    write_reports_csv(&cfg.out.join("shot_reports.csv"), &reports)?;
    write_reports_json(&cfg.out.join("shot_reports.json"), &reports)?;
    Ok(reports)
}

/// `inspect-memory`: retrieval signatures for the first test windows of
/// each dataset, plus their pairwise cosine similarities.
pub fn cmd_inspect_memory(cfg: &RunConfig, windows_per_dataset: usize) -> Result<()> {
    let model: Model<f32> = checkpoint::load(&cfg.checkpoint_path())?;
    let datasets = cfg.prepare_datasets(cfg.task)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(cfg.out.display().to_string(), e))?;

    let mut labels = Vec::new();
    let mut signatures: Vec<Vec<f64>> = Vec::new();
    for prep in &datasets {
        let starts = prep.test_starts()?;
        for (i, &start) in starts.iter().take(windows_per_dataset).enumerate() {
            let window: Vec<f32> = prep.window_norm(start, 0);
            let sig = model.retrieval_signature(&window, &prep.ctx())?;
            labels.push(format!("{}#{i}", prep.name()));
            signatures.push(sig);
        }
    }

    let sig_path = cfg.out.join("signatures.csv");
    {
        let file = std::fs::File::create(&sig_path)
            .map_err(|e| Error::io(sig_path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        let width = signatures.first().map_or(0, |s| s.len());
        let header: Vec<String> = (0..width).map(|i| format!("a{i}")).collect();
        writeln!(w, "window,{}", header.join(","))
            .map_err(|e| Error::io(sig_path.display().to_string(), e))?;
        for (label, sig) in labels.iter().zip(&signatures) {
            let vals: Vec<String> = sig.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(w, "{label},{}", vals.join(","))
                .map_err(|e| Error::io(sig_path.display().to_string(), e))?;
        }
        w.flush().map_err(|e| Error::io(sig_path.display().to_string(), e))?;
    }

    let cos_path = cfg.out.join("cosines.csv");
    {
        let file = std::fs::File::create(&cos_path)
            .map_err(|e| Error::io(cos_path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "window,{}", labels.join(","))
            .map_err(|e| Error::io(cos_path.display().to_string(), e))?;
        for (i, label) in labels.iter().enumerate() {
            let mut row = vec![label.clone()];
            for j in 0..labels.len() {
                row.push(format!(
                    "{:.6}",
                    eval::cosine(&signatures[i], &signatures[j])?
                ));
            }
            writeln!(w, "{}", row.join(","))
                .map_err(|e| Error::io(cos_path.display().to_string(), e))?;
        }
        w.flush().map_err(|e| Error::io(cos_path.display().to_string(), e))?;
    }
    println!(
        "wrote {} signatures to {} and pairwise cosines to {}",
        labels.len(),
        sig_path.display(),
        cos_path.display()
    );
    Ok(())
}
