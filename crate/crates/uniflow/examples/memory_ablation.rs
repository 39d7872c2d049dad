//! Memory-type ablation at toy scale: the full model against variants with
//! one bank removed and with retrieval disabled entirely.
//!
//! ```bash
//! cargo run --release --example memory_ablation
//! ```

use uniflow::cli::bank_variants;
use uniflow::data::TaskSpec;
use uniflow::eval::protocol_predict;
use uniflow::model::{FullConfig, Model, ModelConfig};
use uniflow::patching::PatchConfig;
use uniflow::prepared::PreparedDataset;
use uniflow::synth::{gen_grid, SynthConfig};
use uniflow::train::{train, TrainConfig};

fn main() -> uniflow::Result<()> {
    uniflow::init_threads();
    let synth = SynthConfig {
        seed: 51,
        t_len: 500,
        period_daily: 12,
        period_weekly: 84,
        amplitude: 10.0,
        hotspot_count: 2,
        hotspot_speed: 0.4,
        noise_std: 0.4,
        phase_spread: 1.5,
        diffusion: 0.0,
    };
    let base = FullConfig {
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
        mra: Default::default(),
    };
    let task = TaskSpec::new(12, 12);
    let prep = PreparedDataset::prepare(gen_grid(&synth, 4, 4)?, task, &base.patch, None, 7)?;
    let tcfg = TrainConfig {
        max_epochs: 8,
        iters_per_epoch: 40,
        lr_initial: 1e-3,
        lr_late: 1e-4,
        lr_switch_epoch: 6,
        grad_clip: None,
        val_window_cap: Some(32),
        seed: 3,
        ..Default::default()
    };

    println!("{:<18} {:>10} {:>10}", "variant", "rmse", "mae");
    for (label, mra) in bank_variants(16) {
        let mut cfg = base.clone();
        cfg.mra = mra;
        let mut model: Model<f32> = Model::new(cfg, 5)?;
        train(&mut model, std::slice::from_ref(&prep), &tcfg)?;
        let r = protocol_predict(&model, &prep, &label, 3)?;
        println!("{:<18} {:>10.4} {:>10.4}", label, r.rmse, r.mae);
    }
    Ok(())
}
