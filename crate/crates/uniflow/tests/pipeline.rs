//! End-to-end library integration: generate, prepare, train a tiny model,
//! evaluate, checkpoint, transfer.

use uniflow::data::TaskSpec;
use uniflow::eval;
use uniflow::model::{checkpoint, FullConfig, Model, ModelConfig};
use uniflow::mra::MraConfig;
use uniflow::patching::PatchConfig;
use uniflow::prepared::PreparedDataset;
use uniflow::synth::{gen_graph, gen_grid, SynthConfig};
use uniflow::train::{train, TrainConfig};

fn tiny_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        t_len: 300,
        period_daily: 12,
        period_weekly: 36,
        amplitude: 8.0,
        hotspot_count: 1,
        hotspot_speed: 0.3,
        noise_std: 0.3,
        phase_spread: 1.2,
        diffusion: 0.3,
    }
}

fn tiny_config() -> FullConfig {
    FullConfig {
        patch: PatchConfig {
            p_t: 4,
            p_s: 2,
            d_model: 16,
            num_subgraphs: 4,
        },
        model: ModelConfig {
            enc_layers: 1,
            dec_layers: 1,
            d_model: 16,
            heads: 2,
            ff_mult: 2,
            dropout_bp: 500,
            max_temporal_blocks: 8,
            max_spatial_units: 16,
        },
        mra: MraConfig {
            n_mem: 8,
            enabled: [true; 4],
        },
    }
}

fn tiny_train_cfg(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        iters_per_epoch: 8,
        lr_initial: 1e-3,
        lr_late: 1e-4,
        lr_switch_epoch: epochs.saturating_sub(2).max(1),
        early_stop_patience: epochs,
        seed,
        grad_clip: None,
        val_window_cap: Some(16),
        restore_best: true,
    }
}

#[test]
fn joint_train_eval_checkpoint_roundtrip() {
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid = gen_grid(&tiny_synth(1), 4, 4).unwrap();
    let graph = gen_graph(&tiny_synth(2), 16, 3.0).unwrap();
    let datasets = vec![
        PreparedDataset::prepare(grid, task, &cfg.patch, None, 7).unwrap(),
        PreparedDataset::prepare(graph, task, &cfg.patch, None, 7).unwrap(),
    ];

    let mut model: Model<f32> = Model::new(cfg, 5).unwrap();
    let report = train(&mut model, &datasets, &tiny_train_cfg(3, 3)).unwrap();
    assert_eq!(report.epochs_run, 3);
    assert!(report.best_val.is_finite());
    assert_eq!(model.trained_on, vec!["grid_4x4", "graph_16"]);

    // evaluation emits one finite report per dataset plus a baseline
    for prep in &datasets {
        let r = eval::protocol_predict(&model, prep, "short", 3).unwrap();
        assert!(r.rmse.is_finite() && r.mae.is_finite());
        assert!(r.rmse >= r.mae);
        let ha = eval::protocol_history_average(prep, 12, 3).unwrap();
        assert!(ha.rmse.is_finite());
    }

    // checkpoint round trip preserves predictions exactly
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&model, &path).unwrap();
    let loaded: Model<f32> = checkpoint::load(&path).unwrap();
    assert_eq!(loaded.trained_on, model.trained_on);
    let prep = &datasets[0];
    let start = prep.test_starts().unwrap()[0];
    let window: Vec<f32> = prep.window_norm(start, 0);
    let (a, _) = model.forward_window(&window, &prep.ctx(), None).unwrap();
    let (b, _) = loaded.forward_window(&window, &prep.ctx(), None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn provenance_guard_refuses_seen_targets() {
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid = gen_grid(&tiny_synth(1), 4, 4).unwrap();
    let prep = PreparedDataset::prepare(grid, task, &cfg.patch, None, 7).unwrap();
    let mut model: Model<f32> = Model::new(cfg, 5).unwrap();
    train(&mut model, std::slice::from_ref(&prep), &tiny_train_cfg(3, 1)).unwrap();

    let err = eval::zero_few_shot(&model, &prep, &tiny_train_cfg(4, 1), 3);
    assert!(matches!(err, Err(uniflow::Error::Provenance(_))));
}

#[test]
fn zero_few_shot_reports_on_unseen_target() {
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid = gen_grid(&tiny_synth(1), 4, 4).unwrap();
    let prep = PreparedDataset::prepare(grid, task, &cfg.patch, None, 7).unwrap();
    let mut target_ds = gen_grid(&tiny_synth(8), 4, 4).unwrap();
    target_ds.name = "target".into();
    let target = PreparedDataset::prepare(target_ds, task, &cfg.patch, None, 7).unwrap();

    let mut model: Model<f32> = Model::new(cfg, 5).unwrap();
    train(&mut model, std::slice::from_ref(&prep), &tiny_train_cfg(3, 2)).unwrap();

    let reports = eval::zero_few_shot(&model, &target, &tiny_train_cfg(4, 2), 3).unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0].protocol, "zero_shot");
    assert_eq!(reports[1].protocol, "few_shot_5");
    assert_eq!(reports[2].protocol, "few_shot_10");
    for r in &reports {
        assert!(r.rmse.is_finite());
    }
}

#[test]
fn noise_level_zero_equals_clean_protocol() {
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid = gen_grid(&tiny_synth(3), 4, 4).unwrap();
    let prep = PreparedDataset::prepare(grid, task, &cfg.patch, None, 7).unwrap();
    let model: Model<f32> = Model::new(cfg, 5).unwrap();

    let clean = eval::protocol_predict(&model, &prep, "short", 3).unwrap();
    let zero = eval::noise_eval(&model, &prep, 0.0, 3).unwrap();
    assert_eq!(clean.rmse, zero.rmse);
    assert_eq!(clean.mae, zero.mae);

    // sigma check: level 0.01 on mean 6.837 gives 0.06837
    let sigma: f64 = 0.01 * 6.837;
    assert!((sigma - 0.06837).abs() < 1e-12);
}

#[test]
fn case_study_trivial_identities() {
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid = gen_grid(&tiny_synth(3), 4, 4).unwrap();
    let prep = PreparedDataset::prepare(grid, task, &cfg.patch, None, 7).unwrap();
    let model: Model<f32> = Model::new(cfg, 5).unwrap();

    let start = prep.test_starts().unwrap()[0];
    let sim = eval::case_study(&model, &prep, start, &prep, start).unwrap();
    assert!((sim - 1.0).abs() < 1e-9);

    // signature length = 4 * n_mem
    let window: Vec<f32> = prep.window_norm(start, 0);
    let sig = model.retrieval_signature(&window, &prep.ctx()).unwrap();
    assert_eq!(sig.len(), 4 * 8);
}

#[test]
fn signatures_separate_shared_patterns_from_noise() {
    // phase-shifted copies of one periodic pattern stay closer to each
    // other than to white noise, averaged over model seeds (the frequency
    // view discards phase)
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let layout = uniflow::patching::PatchLayout::new(
        uniflow::data::Kind::Grid,
        &task,
        &cfg.patch,
        Some(uniflow::data::GridSpec {
            height: 2,
            width: 2,
        }),
        4,
    )
    .unwrap();
    let ctx = uniflow::model::SampleCtx {
        layout: &layout,
        parts: None,
    };
    let len = task.window_len() * 4;
    let periodic = |phase: f64| -> Vec<f32> {
        (0..len)
            .map(|i| {
                let t = (i / 4) as f64;
                (0.5 + 0.4 * (std::f64::consts::TAU * t / 12.0 + phase).sin()) as f32
            })
            .collect()
    };
    let mut shifted_mean = 0.0;
    let mut noise_mean = 0.0;
    for seed in 0..10u64 {
        let model: Model<f32> = Model::new(cfg.clone(), seed).unwrap();
        let a = model.retrieval_signature(&periodic(0.0), &ctx).unwrap();
        let b = model.retrieval_signature(&periodic(1.1), &ctx).unwrap();
        let mut rng = uniflow::rng::Stream::new(900 + seed);
        let noise: Vec<f32> = (0..len).map(|_| rng.uniform(0.0, 1.0) as f32).collect();
        let c = model.retrieval_signature(&noise, &ctx).unwrap();
        shifted_mean += eval::cosine(&a, &b).unwrap();
        noise_mean += eval::cosine(&a, &c).unwrap();
    }
    shifted_mean /= 10.0;
    noise_mean /= 10.0;
    assert!(
        shifted_mean > noise_mean,
        "pattern similarity {shifted_mean:.4} not above noise similarity {noise_mean:.4}"
    );
}

#[test]
fn gradients_reach_every_enabled_memory_bank() {
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid = gen_grid(&tiny_synth(6), 4, 4).unwrap();
    let prep = PreparedDataset::prepare(grid, task, &cfg.patch, None, 7).unwrap();
    let model: Model<f32> = Model::new(cfg, 5).unwrap();

    let start = prep.train_starts().unwrap()[0];
    let window: Vec<f32> = prep.window_norm(start, 0);
    let (pred, cache) = model.forward_window(&window, &prep.ctx(), None).unwrap();
    let dpred = uniflow::train::horizon_mse_grad(&pred, &window, &task, 16);
    let mut grads = vec![0.0f32; model.store.len()];
    model.backward_window(&prep.ctx(), &cache, &dpred, &mut grads);

    for bank in &model.mra.banks {
        let key_norm = uniflow::linalg::norm2(
            &grads[bank.keys.offset..bank.keys.offset + bank.keys.len],
        );
        let value_norm = uniflow::linalg::norm2(
            &grads[bank.values.offset..bank.values.offset + bank.values.len],
        );
        assert!(key_norm > 0.0, "{:?} keys received no gradient", bank.kind);
        assert!(value_norm > 0.0, "{:?} values received no gradient", bank.kind);
    }
}

#[test]
fn zeroed_memories_make_augmentation_the_identity() {
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid = gen_grid(&tiny_synth(6), 4, 4).unwrap();
    let prep = PreparedDataset::prepare(grid.clone(), task, &cfg.patch, None, 7).unwrap();
    let mut zeroed: Model<f32> = Model::new(cfg.clone(), 5).unwrap();
    for bank in zeroed.mra.banks {
        for v in zeroed.store.get_mut(bank.values) {
            *v = 0.0;
        }
    }
    let mut disabled = zeroed.clone();
    disabled.mra.cfg.enabled = [false; 4];

    let start = prep.test_starts().unwrap()[0];
    let window: Vec<f32> = prep.window_norm(start, 0);
    let (with_zero_mem, _) = zeroed.forward_window(&window, &prep.ctx(), None).unwrap();
    let (without_mra, _) = disabled.forward_window(&window, &prep.ctx(), None).unwrap();
    assert_eq!(with_zero_mem, without_mra);
}

#[test]
fn prompts_depend_only_on_history() {
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid = gen_grid(&tiny_synth(6), 4, 4).unwrap();
    let prep = PreparedDataset::prepare(grid, task, &cfg.patch, None, 7).unwrap();
    let model: Model<f32> = Model::new(cfg, 5).unwrap();

    let start = prep.test_starts().unwrap()[0];
    let window: Vec<f32> = prep.window_norm(start, 0);
    let mut perturbed = window.clone();
    for t in task.history_len..task.window_len() {
        for loc in 0..16 {
            perturbed[t * 16 + loc] += 7.5;
        }
    }
    let (_, cache_a) = model.forward_window(&window, &prep.ctx(), None).unwrap();
    let (_, cache_b) = model.forward_window(&perturbed, &prep.ctx(), None).unwrap();
    let ma = cache_a.mra.unwrap();
    let mb = cache_b.mra.unwrap();
    assert_eq!(ma.prompt_sum, mb.prompt_sum);
    assert_eq!(ma.mean_prompt, mb.mean_prompt);
    for (a, b) in ma.banks.iter().zip(mb.banks.iter()) {
        assert_eq!(a.as_ref().unwrap().alpha, b.as_ref().unwrap().alpha);
    }
}

#[test]
fn history_changes_propagate_to_future_predictions() {
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid = gen_grid(&tiny_synth(6), 4, 4).unwrap();
    let prep = PreparedDataset::prepare(grid, task, &cfg.patch, None, 7).unwrap();
    let model: Model<f32> = Model::new(cfg, 5).unwrap();

    let start = prep.test_starts().unwrap()[0];
    let window: Vec<f32> = prep.window_norm(start, 0);
    let mut perturbed = window.clone();
    perturbed[3 * 16 + 5] += 1.0; // one history value
    let (a, _) = model.forward_window(&window, &prep.ctx(), None).unwrap();
    let (b, _) = model.forward_window(&perturbed, &prep.ctx(), None).unwrap();
    let delta: f64 = (task.history_len..task.window_len())
        .flat_map(|t| (0..16).map(move |loc| (t, loc)))
        .map(|(t, loc)| (a[t * 16 + loc] - b[t * 16 + loc]).abs() as f64)
        .sum();
    assert!(delta > 0.0, "future predictions ignore history changes");
}

#[test]
fn multi_channel_windows_fold_into_batch() {
    // a two-channel dataset must train and evaluate without shape issues
    let cfg = tiny_config();
    let task = TaskSpec::new(12, 12);
    let grid1 = gen_grid(&tiny_synth(4), 4, 4).unwrap();
    let grid2 = gen_grid(&tiny_synth(5), 4, 4).unwrap();
    let mut two = grid1.clone();
    two.channels = 2;
    two.values = (0..grid1.t_len * 16)
        .flat_map(|i| [grid1.values[i], grid2.values[i]])
        .collect();
    two.name = "grid_2ch".into();
    let (mean, std, min, max) = uniflow::data::FlowDataset::compute_stats(&two.values);
    two.meta.mean = mean;
    two.meta.std = std;
    two.meta.min = min;
    two.meta.max = max;
    two.meta.normalizer = None;
    two.validate().unwrap();

    let prep = PreparedDataset::prepare(two, task, &cfg.patch, None, 7).unwrap();
    let mut model: Model<f32> = Model::new(cfg, 5).unwrap();
    let report = train(&mut model, std::slice::from_ref(&prep), &tiny_train_cfg(3, 1)).unwrap();
    assert!(report.loss_history.iter().all(|r| r.loss.is_finite()));
    let r = eval::protocol_predict(&model, &prep, "short", 3).unwrap();
    assert!(r.rmse.is_finite());
}
