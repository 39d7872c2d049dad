//! Zero-shot and few-shot transfer: train on source datasets, evaluate on a
//! held-out target never seen in training, then fine-tune on 5% / 10% of
//! its training windows.
//!
//! ```bash
//! cargo run --release --example transfer_few_shot
//! ```

use uniflow::data::TaskSpec;
use uniflow::eval::{zero_few_shot, zeros_baseline_rmse};
use uniflow::model::{FullConfig, Model, ModelConfig};
use uniflow::mra::MraConfig;
use uniflow::patching::PatchConfig;
use uniflow::prepared::PreparedDataset;
use uniflow::synth::{gen_grid, SynthConfig};
use uniflow::train::{train, TrainConfig};

fn main() -> uniflow::Result<()> {
    uniflow::init_threads();
    let mk_synth = |seed: u64, amplitude: f64| SynthConfig {
        seed,
        t_len: 600,
        period_daily: 12,
        period_weekly: 84,
        amplitude,
        hotspot_count: 2,
        hotspot_speed: 0.4,
        noise_std: 0.3,
        phase_spread: 1.5,
        diffusion: 0.0,
    };
    let cfg = FullConfig {
        patch: PatchConfig {
            p_t: 4,
            p_s: 2,
            d_model: 24,
            num_subgraphs: 4,
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
    let task = TaskSpec::new(12, 12);

    // two source grids; the target has different phases and amplitude
    let sources = vec![
        PreparedDataset::prepare(gen_grid(&mk_synth(1, 8.0), 4, 4)?, task, &cfg.patch, None, 7)?,
        PreparedDataset::prepare(gen_grid(&mk_synth(2, 14.0), 4, 4)?, task, &cfg.patch, None, 7)?,
    ];
    let mut target_ds = gen_grid(&mk_synth(9, 11.0), 4, 4)?;
    target_ds.name = "grid_target".into();
    let target = PreparedDataset::prepare(target_ds, task, &cfg.patch, None, 7)?;

    let mut model: Model<f32> = Model::new(cfg, 5)?;
    let tcfg = TrainConfig {
        max_epochs: 12,
        iters_per_epoch: 40,
        lr_initial: 1e-3,
        lr_late: 1e-4,
        lr_switch_epoch: 10,
        grad_clip: None,
        val_window_cap: Some(32),
        seed: 3,
        ..Default::default()
    };
    train(&mut model, &sources, &tcfg)?;
    println!("trained on {:?}", model.trained_on);

    let few_cfg = TrainConfig {
        max_epochs: 8,
        iters_per_epoch: 10,
        lr_initial: 5e-4,
        lr_late: 5e-5,
        lr_switch_epoch: 6,
        grad_clip: None,
        val_window_cap: Some(32),
        seed: 3,
        ..Default::default()
    };
    println!("\n{:<14} {:>10} {:>10}", "protocol", "rmse", "mae");
    for r in zero_few_shot(&model, &target, &few_cfg, 3)? {
        println!("{:<14} {:>10.4} {:>10.4}", r.protocol, r.rmse, r.mae);
    }
    println!("{:<14} {:>10.4}", "all-zeros", zeros_baseline_rmse(&target)?);
    Ok(())
}
