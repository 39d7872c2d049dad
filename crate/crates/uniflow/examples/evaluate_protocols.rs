//! Short-term (12->12) and long-term (64->64) evaluation of one model on
//! one dataset, against the history-average baseline.
//!
//! ```bash
//! cargo run --release --example evaluate_protocols
//! ```

use uniflow::data::TaskSpec;
use uniflow::eval::{protocol_history_average, protocol_predict, zeros_baseline_rmse};
use uniflow::model::{FullConfig, Model, ModelConfig};
use uniflow::mra::MraConfig;
use uniflow::patching::PatchConfig;
use uniflow::prepared::PreparedDataset;
use uniflow::synth::{gen_grid, SynthConfig};
use uniflow::train::{train, TrainConfig};

fn main() -> uniflow::Result<()> {
    uniflow::init_threads();
    let synth = SynthConfig {
        seed: 21,
        t_len: 1000,
        period_daily: 12,
        period_weekly: 84,
        amplitude: 10.0,
        hotspot_count: 2,
        hotspot_speed: 0.4,
        noise_std: 0.4,
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

    // train on the short task
    let short = TaskSpec::new(12, 12);
    let grid = gen_grid(&synth, 4, 4)?;
    let prep_short = PreparedDataset::prepare(grid.clone(), short, &cfg.patch, None, 7)?;
    let mut model: Model<f32> = Model::new(cfg.clone(), 5)?;
    let tcfg = TrainConfig {
        max_epochs: 26,
        iters_per_epoch: 40,
        lr_initial: 1e-3,
        lr_late: 1e-4,
        lr_switch_epoch: 21,
        grad_clip: None,
        val_window_cap: Some(32),
        seed: 3,
        ..Default::default()
    };
    train(&mut model, std::slice::from_ref(&prep_short), &tcfg)?;

    println!("{:<18} {:>10} {:>10}", "protocol", "rmse", "mae");
    let r = protocol_predict(&model, &prep_short, "short 12->12", 3)?;
    println!("{:<18} {:>10.4} {:>10.4}", r.protocol, r.rmse, r.mae);
    let ha = protocol_history_average(&prep_short, 12, 3)?;
    println!("{:<18} {:>10.4} {:>10.4}", "  history average", ha.rmse, ha.mae);
    println!("{:<18} {:>10.4}", "  all-zeros", zeros_baseline_rmse(&prep_short)?);

    // the same trained weights evaluate on the long task: the layout grows,
    // positions beyond the trained range fall back to their random encodings
    let long = TaskSpec::new(64, 64);
    let prep_long = PreparedDataset::prepare(grid, long, &cfg.patch, None, 7)?;
    let r = protocol_predict(&model, &prep_long, "long 64->64", 3)?;
    println!("{:<18} {:>10.4} {:>10.4}", r.protocol, r.rmse, r.mae);
    let ha = protocol_history_average(&prep_long, 12, 3)?;
    println!("{:<18} {:>10.4} {:>10.4}", "  history average", ha.rmse, ha.mae);
    Ok(())
}
