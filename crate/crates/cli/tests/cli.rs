//! Exit-code and file-output behavior of the `trcl` binary.

use std::path::Path;
use std::process::Command;

fn trcl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trcl"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const GOOD_CONFIG: &str = r#"
[stream]
family = "GaussianShift"
n_tasks = 2
heterogeneity = 2.0
seed = 3
train_size = 200
eval_size = 50

[run]
method = "TrustRegion"
seeds = [1, 2]

[run.continual]
lambda = 0.1
beta = 1.0
eta = 0.01
fisher_mode = "Diagonal"
steps_per_task = 40
batch_size = 16
"#;

#[test]
fn verify_passes_and_prints_per_check_lines() {
    let out = trcl()
        .args(["verify", "--suite", "rank-one-square"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS rank_one_square"));
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, GOOD_CONFIG);
    let out_dir = dir.path().join("out");
    let out = trcl()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("TrustRegion_seed1.csv").exists());
    assert!(out_dir.join("TrustRegion_seed1.meta.json").exists());
    assert!(out_dir.join("TrustRegion_seed2.csv").exists());
    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"TrustRegion\""));
    assert!(summary.contains("steps_to_reconverge"));
    assert!(summary.contains("task_0"));
    assert!(summary.contains("rel_increase_20pct"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    // meta section without the Ftml method is rejected by validation
    write(
        &cfg,
        r#"
[stream]
family = "GaussianShift"
n_tasks = 2
heterogeneity = 1.0
seed = 0

[run]
method = "Replay"

[run.meta]
alpha = 0.1
eta = 0.01
inner_steps = 1
first_order = true
"#,
    );
    let out = trcl().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let missing = dir.path().join("nope.toml");
    let out = trcl()
        .args(["run", "--config"])
        .arg(&missing)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("diverge.toml");
    write(
        &cfg,
        r#"
[stream]
family = "GaussianShift"
n_tasks = 2
heterogeneity = 4.0
seed = 3
train_size = 100
eval_size = 50

[run]
method = "Finetune"
seeds = [1]

[run.continual]
lambda = 0.0
beta = 0.0
eta = 10.0
fisher_mode = "Diagonal"
steps_per_task = 400
batch_size = 16
"#,
    );
    let out = trcl()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn sweep_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, GOOD_CONFIG);
    let grid = dir.path().join("grid.toml");
    write(
        &grid,
        r#"
methods = ["Finetune", "TrustRegion"]
lambda = [0.1, 1.0]
"#,
    );
    let out_dir = dir.path().join("out");
    let out = trcl()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--grid")
        .arg(&grid)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    for label in [
        "Finetune_lambda0.1_beta1_eta0.01",
        "Finetune_lambda1_beta1_eta0.01",
        "TrustRegion_lambda0.1_beta1_eta0.01",
    ] {
        assert!(summary.contains(label), "summary missing {label}");
    }
}
