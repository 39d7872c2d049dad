//! Command-line surface: byte-identical reruns, end-to-end train/eval, and
//! machine-readable failures.

use std::path::Path;
use std::process::Command;

fn uniflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uniflow"))
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    for out in [&out1, &out2] {
        let status = uniflow()
            .args(["gen", "--seed", "7", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = dir_snapshot(&out1);
    let b = dir_snapshot(&out2);
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "{name_a} differs between runs");
    }
    // suite contents: five datasets, one marked as the held-out target
    assert!(out1.join("grid_target/meta.json").exists());
    assert_eq!(std::fs::read_dir(&out1).unwrap().count(), 5);
}

fn write_tiny_config(dir: &Path, data: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "datasets": [data.join("grid_a"), data.join("graph_a")],
        "target_dataset": data.join("grid_target"),
        "patch": { "p_t": 4, "p_s": 4, "d_model": 16, "num_subgraphs": 4 },
        "model": {
            "enc_layers": 1, "dec_layers": 1, "d_model": 16, "heads": 2,
            "ff_mult": 2, "dropout_bp": 0,
            "max_temporal_blocks": 32, "max_spatial_units": 64
        },
        "mra": { "n_mem": 8, "enabled": [true, true, true, true] },
        "train": {
            "max_epochs": 1, "iters_per_epoch": 4, "seed": 7,
            "lr_initial": 1e-3, "lr_late": 1e-4, "lr_switch_epoch": 100,
            "grad_clip": null, "val_window_cap": 8
        },
        "task": { "history_len": 12, "horizon_len": 12 },
        "seed": 7,
        "out": dir.join("run")
    });
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn train_eval_shot_inspect_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(uniflow()
        .args(["gen", "--seed", "3", "--out"])
        .arg(&data)
        .status()
        .unwrap()
        .success());

    let cfg_path = write_tiny_config(tmp.path(), &data);
    let run_dir = tmp.path().join("run");

    assert!(uniflow()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .status()
        .unwrap()
        .success());
    assert!(run_dir.join("checkpoint_final.ckpt").exists());
    assert!(run_dir.join("config_snapshot.json").exists());
    let loss = std::fs::read_to_string(run_dir.join("loss.csv")).unwrap();
    assert!(loss.starts_with("step,dataset,loss"));
    assert_eq!(loss.lines().count(), 1 + 2 * 4); // 2 datasets x K=4 steps

    // eval: one model row and one baseline row per dataset
    let output = uniflow()
        .args(["eval", "--config"])
        .arg(&cfg_path)
        .args(["--protocol", "short"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let reports = std::fs::read_to_string(run_dir.join("reports.csv")).unwrap();
    let model_rows = reports
        .lines()
        .filter(|l| l.contains(",short,"))
        .count();
    assert_eq!(model_rows, 2, "one report row per dataset:\n{reports}");

    // eval reruns reproduce the report files byte for byte
    let reports_first = std::fs::read(run_dir.join("reports.csv")).unwrap();
    assert!(uniflow()
        .args(["eval", "--config"])
        .arg(&cfg_path)
        .args(["--protocol", "short"])
        .status()
        .unwrap()
        .success());
    assert_eq!(reports_first, std::fs::read(run_dir.join("reports.csv")).unwrap());

    // the long protocol reuses the same checkpoint on 64 -> 64 windows
    assert!(uniflow()
        .args(["eval", "--config"])
        .arg(&cfg_path)
        .args(["--protocol", "long"])
        .status()
        .unwrap()
        .success());
    let long_reports = std::fs::read_to_string(run_dir.join("reports.csv")).unwrap();
    assert_eq!(long_reports.lines().filter(|l| l.contains(",long,")).count(), 2);

    // shot: zero-shot plus both few-shot fractions on the held-out target
    assert!(uniflow()
        .args(["shot", "--config"])
        .arg(&cfg_path)
        .status()
        .unwrap()
        .success());
    let shot = std::fs::read_to_string(run_dir.join("shot_reports.csv")).unwrap();
    assert!(shot.contains("zero_shot"));
    assert!(shot.contains("few_shot_5"));
    assert!(shot.contains("few_shot_10"));

    // a single-fraction run emits just that fraction plus the reference
    assert!(uniflow()
        .args(["shot", "--config"])
        .arg(&cfg_path)
        .args(["--fraction", "0.05"])
        .status()
        .unwrap()
        .success());
    let shot = std::fs::read_to_string(run_dir.join("shot_reports.csv")).unwrap();
    assert!(shot.contains("zero_shot"));
    assert!(shot.contains("few_shot_5"));
    assert!(!shot.contains("few_shot_10"));

    // inspect-memory: signature and cosine matrices
    assert!(uniflow()
        .args(["inspect-memory", "--config"])
        .arg(&cfg_path)
        .args(["--windows", "2"])
        .status()
        .unwrap()
        .success());
    let sig = std::fs::read_to_string(run_dir.join("signatures.csv")).unwrap();
    assert_eq!(sig.lines().count(), 1 + 4); // 2 datasets x 2 windows
    assert!(run_dir.join("cosines.csv").exists());
}

#[test]
fn rerunning_train_reproduces_outputs_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(uniflow()
        .args(["gen", "--seed", "5", "--out"])
        .arg(&data)
        .status()
        .unwrap()
        .success());
    let cfg_path = write_tiny_config(tmp.path(), &data);

    let run = tmp.path().join("run");
    assert!(uniflow().args(["train", "--config"]).arg(&cfg_path).status().unwrap().success());
    let first = dir_snapshot(&run);
    std::fs::remove_dir_all(&run).unwrap();
    assert!(uniflow().args(["train", "--config"]).arg(&cfg_path).status().unwrap().success());
    let second = dir_snapshot(&run);
    assert_eq!(first, second, "train outputs are not reproducible");
}

#[test]
fn bad_config_fails_with_error_json() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\"this is\": \"not a run config\"}").unwrap();
    let output = uniflow()
        .args(["train", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(parsed.get("error").is_some());
    assert!(parsed.get("kind").is_some());

    // missing dataset path is also a config error
    let cfg = write_tiny_config(tmp.path(), &tmp.path().join("nonexistent"));
    let output = uniflow().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert!(!output.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(String::from_utf8(output.stdout).unwrap().trim()).unwrap();
    assert_eq!(parsed["kind"], "config");
}
