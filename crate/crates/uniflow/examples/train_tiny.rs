//! End-to-end joint training at toy scale: one grid plus one graph dataset,
//! a small model, a minute of CPU.
//!
//! ```bash
//! cargo run --release --example train_tiny
//! ```

use uniflow::data::TaskSpec;
use uniflow::model::{FullConfig, Model, ModelConfig};
use uniflow::mra::MraConfig;
use uniflow::patching::PatchConfig;
use uniflow::prepared::PreparedDataset;
use uniflow::synth::{gen_graph, gen_grid, SynthConfig};
use uniflow::train::{train, TrainConfig};

fn main() -> uniflow::Result<()> {
    uniflow::init_threads();
    let synth = SynthConfig {
        seed: 11,
        t_len: 400,
        period_daily: 12,
        period_weekly: 84,
        amplitude: 8.0,
        hotspot_count: 2,
        hotspot_speed: 0.4,
        noise_std: 0.3,
        phase_spread: 1.5,
        diffusion: 0.3,
    };
    let task = TaskSpec::new(12, 12);
    let cfg = FullConfig {
        patch: PatchConfig {
            p_t: 4,
            p_s: 2,
            d_model: 24,
            num_subgraphs: 6,
        },
        model: ModelConfig {
            enc_layers: 1,
            dec_layers: 1,
            d_model: 24,
            heads: 4,
            ff_mult: 2,
            dropout_bp: 0,
            max_temporal_blocks: 32,
            max_spatial_units: 64,
        },
        mra: MraConfig {
            n_mem: 16,
            enabled: [true; 4],
        },
    };

    let grid = gen_grid(&synth, 6, 6)?;
    let graph = gen_graph(&synth, 24, 4.0)?;
    let datasets = vec![
        PreparedDataset::prepare(grid, task, &cfg.patch, None, 7)?,
        PreparedDataset::prepare(graph, task, &cfg.patch, None, 7)?,
    ];

    let mut model: Model<f32> = Model::new(cfg, 5)?;
    println!("model: {} parameters", model.num_params());

    let tcfg = TrainConfig {
        max_epochs: 20,
        iters_per_epoch: 30,
        lr_initial: 1e-3,
        lr_late: 1e-4,
        lr_switch_epoch: 16,
        early_stop_patience: 20,
        seed: 3,
        grad_clip: None,
        val_window_cap: Some(32),
        restore_best: true,
    };
    let report = train(&mut model, &datasets, &tcfg)?;
    for (epoch, val) in report.val_history.iter().step_by(4) {
        println!("epoch {epoch:>2}: val rmse (normalized) {val:.4}");
    }
    println!(
        "trained on {:?}, best val {:.4}",
        model.trained_on, report.best_val
    );

    for prep in &datasets {
        let r = uniflow::eval::protocol_predict(&model, prep, "short", 3)?;
        let ha = uniflow::eval::protocol_history_average(prep, 12, 3)?;
        println!(
            "{:<10} model rmse {:.3}  vs history-average {:.3}",
            r.dataset, r.rmse, ha.rmse
        );
    }
    println!("\n(toy budget; the acceptance-scale runs in tests/acceptance.rs");
    println!(" train longer on more data and beat the baseline on every dataset)");
    Ok(())
}
