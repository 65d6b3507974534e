//! End-to-end CLI checks: config generation and validation, a miniature
//! train -> eval -> dump-attention -> sweep chain, and error surfaces.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_swarmlink"))
}

fn write_tiny_config(dir: &Path, mechanism: &str, episodes: usize) -> std::path::PathBuf {
    let out = bin()
        .args(["init-config", "--profile", "desk", "-o"])
        .arg(dir.join("base.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("base.json")).unwrap()).unwrap();
    cfg["mechanism"] = match mechanism {
        "vanilla" => serde_json::json!({"type": "vanilla"}),
        "mha3" => serde_json::json!({"type": "mha", "heads": 3}),
        "isha1" => serde_json::json!({"type": "isha", "iterations": 1}),
        _ => serde_json::json!({"type": "isha", "iterations": 3}),
    };
    cfg["sac"]["episodes"] = serde_json::json!(episodes);
    cfg["sac"]["warmup_steps"] = serde_json::json!(100);
    cfg["seeds"] = serde_json::json!([0]);
    cfg["out_dir"] = serde_json::json!(dir.join("runs").to_str().unwrap());
    cfg["eval_episodes"] = serde_json::json!(2);
    let path = dir.join(format!("{mechanism}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn invalid_config_is_rejected_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_tiny_config(dir.path(), "isha3", 2);
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    cfg["mechanism"] = serde_json::json!({"type": "isha", "iterations": 9});
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = bin().args(["costs", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mechanism.iterations"), "{err}");
}

#[test]
fn train_eval_dump_sweep_chain() {
    let dir = tempfile::tempdir().unwrap();
    let isha_cfg = write_tiny_config(dir.path(), "isha3", 3);
    let vanilla_cfg = write_tiny_config(dir.path(), "vanilla", 3);

    for cfg in [&isha_cfg, &vanilla_cfg] {
        let out = bin().args(["train", "--config"]).arg(cfg).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ckpt = dir.path().join("runs/isha3/seed0/checkpoint.bin");
    assert!(ckpt.exists());
    let metrics = std::fs::read_to_string(dir.path().join("runs/isha3/seed0/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3, "header plus one row per episode");
    assert!(dir.path().join("runs/isha3/seed0/manifest.json").exists());

    // eval: trajectory rows = steps x agents per episode
    let eval_out = dir.path().join("eval");
    let out = bin()
        .args(["eval", "--config"])
        .arg(&isha_cfg)
        .args(["--episodes", "2", "--out"])
        .arg(&eval_out)
        .arg("--checkpoint")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(eval_out.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 2 * 120 * 4, "header + episodes*steps*agents");
    assert!(eval_out.join("summary.json").exists());

    // repeated eval is identical
    let eval_out2 = dir.path().join("eval2");
    let out2 = bin()
        .args(["eval", "--config"])
        .arg(&isha_cfg)
        .args(["--episodes", "2", "--out"])
        .arg(&eval_out2)
        .arg("--checkpoint")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(out2.status.success());
    assert_eq!(out.stdout, out2.stdout, "summaries must repeat exactly");

    // mechanism mismatch is named
    let out = bin()
        .args(["eval", "--config"])
        .arg(&vanilla_cfg)
        .args(["--episodes", "1"])
        .arg("--checkpoint")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("isha3") && err.contains("vanilla"), "{err}");

    // attention dump: 3 rows of 4 agent columns per agent file, rows sum to 1
    let att_dir = dir.path().join("attention");
    let out = bin()
        .args(["dump-attention", "--config"])
        .arg(&isha_cfg)
        .arg("--checkpoint")
        .arg(&ckpt)
        .args(["--scenario-seed", "5", "--out"])
        .arg(&att_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for agent in 0..4 {
        let text =
            std::fs::read_to_string(att_dir.join(format!("attention_agent{agent}.csv"))).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 3);
        let mut last_argmax = Vec::new();
        for row in rows {
            let cells: Vec<f64> =
                row.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
            assert_eq!(cells.len(), 4);
            let sum: f64 = cells.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert_eq!(cells[agent], 0.0, "self entry must be zero");
            let argmax = cells
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(!last_argmax.contains(&argmax), "iteration argmaxes are distinct");
            last_argmax.push(argmax);
        }
    }

    // vanilla has no scores to dump
    let vanilla_ckpt = dir.path().join("runs/vanilla/seed0/checkpoint.bin");
    let out = bin()
        .args(["dump-attention", "--config"])
        .arg(&vanilla_cfg)
        .arg("--checkpoint")
        .arg(&vanilla_ckpt)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no attention scores"));

    // sweep over the two trained mechanisms: |powers| x |found mechanisms| rows
    let sweep_csv = dir.path().join("sweep.csv");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&isha_cfg)
        .arg("--runs")
        .arg(dir.path().join("runs"))
        .args(["--powers", "25,35", "--episodes", "1", "--out"])
        .arg(&sweep_csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing checkpoint"), "skipped mechanisms are reported: {err}");
    let text = std::fs::read_to_string(&sweep_csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2, "header + powers x trained mechanisms");
}
