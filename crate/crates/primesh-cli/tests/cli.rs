//! End-to-end checks of the command-line surface, on a micro configuration
//! that keeps every training invocation to a few seconds.

use std::path::Path;
use std::process::{Command, Output};

fn primesh() -> Command {
    Command::new(env!("CARGO_BIN_EXE_primesh"))
}

fn expect_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_micro_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("micro.cfg");
    std::fs::write(
        &path,
        "[geometry]\nresolution = 16\n\n[network]\nprofile = desk\n\n[training]\n\
         batches_per_iter = 2\ndagger_iters = 1\nbatch_size = 8\n\
         rl_episodes_per_shape = 1\nrl_updates_per_episode = 2\ntarget_sync = 5\n\
         demo_long_capacity = 5000\nself_capacity = 2000\n",
    )
    .unwrap();
    path
}

#[test]
fn gen_ingest_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let cfg = write_micro_config(tmp.path());
    let out = primesh()
        .args(["--config", cfg.to_str().unwrap(), "gen-data", "--count", "2"])
        .args(["--category", "boxy-cars", "--seed", "4", "--out", data.to_str().unwrap()])
        .output()
        .unwrap();
    expect_success(&out, "gen-data");
    let reingested = tmp.path().join("reingested");
    let files: Vec<String> = (0..2)
        .map(|i| data.join(format!("car_{i:03}.voxg")).to_str().unwrap().to_string())
        .collect();
    let out = primesh()
        .args(["ingest", "--out", reingested.to_str().unwrap(), "--category", "boxy-cars"])
        .args(&files)
        .output()
        .unwrap();
    expect_success(&out, "ingest");
    let a = std::fs::read_to_string(data.join("manifest.txt")).unwrap();
    let b = std::fs::read_to_string(reingested.join("manifest.txt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ingest_rejects_corrupt_files_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.voxg");
    std::fs::write(&bad, b"NOPE not a grid").unwrap();
    let out = primesh()
        .args(["ingest", "--out", tmp.path().join("out").to_str().unwrap()])
        .arg(bad.to_str().unwrap())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: "), "machine-readable error line missing: {stderr}");
}

#[test]
fn dry_run_validates_without_side_effects() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("never_created");
    let out = primesh()
        .args(["--dry-run", "gen-data", "--count", "1", "--category", "boxy-tables"])
        .args(["--out", data.to_str().unwrap()])
        .output()
        .unwrap();
    expect_success(&out, "dry-run gen-data");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.is_empty() || l.starts_with("plan: ")));
    assert!(!data.exists(), "dry run must not create the dataset");
}

#[test]
fn full_pipeline_micro_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_micro_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let data = tmp.path().join("data");
    let runs = tmp.path().join("runs");

    let out = primesh()
        .args(["--config", cfg, "gen-data", "--count", "2", "--category", "boxy-tables"])
        .args(["--seed", "1", "--out", data.to_str().unwrap()])
        .output()
        .unwrap();
    expect_success(&out, "gen-data");

    // Demonstrations.
    let archive = tmp.path().join("demos.dema");
    let out = primesh()
        .args(["--config", cfg, "demo", "--dataset", data.to_str().unwrap()])
        .args(["--out", archive.to_str().unwrap()])
        .output()
        .unwrap();
    expect_success(&out, "demo");
    assert!(archive.exists());

    // Primitive agent training (run root through the environment variable).
    let out = primesh()
        .env("PRIMESH_RUN_ROOT", runs.to_str().unwrap())
        .args(["--config", cfg, "train-prim", "--dataset", data.to_str().unwrap()])
        .args(["--run", "p0"])
        .output()
        .unwrap();
    expect_success(&out, "train-prim");
    let prim_ckpt = runs.join("p0").join("prim.qnck");
    assert!(prim_ckpt.exists());
    assert!(runs.join("p0").join("config.cfg").exists());
    assert!(runs.join("p0").join("metrics.csv").exists());

    // Loop agent training against the frozen primitive agent.
    let out = primesh()
        .env("PRIMESH_RUN_ROOT", runs.to_str().unwrap())
        .args(["--config", cfg, "train-mesh", "--dataset", data.to_str().unwrap()])
        .args(["--run", "m0", "--prim-checkpoint", prim_ckpt.to_str().unwrap()])
        .output()
        .unwrap();
    expect_success(&out, "train-mesh");
    let mesh_ckpt = runs.join("m0").join("mesh.qnck");
    assert!(mesh_ckpt.exists());

    // Two-step inference over one shape of the dataset.
    let model_dir = tmp.path().join("model_out");
    let out = primesh()
        .args(["--config", cfg, "model"])
        .args(["--prim-checkpoint", prim_ckpt.to_str().unwrap()])
        .args(["--mesh-checkpoint", mesh_ckpt.to_str().unwrap()])
        .args(["--reference", data.join("table_000.pfm").to_str().unwrap()])
        .args(["--target", data.join("table_000.voxg").to_str().unwrap()])
        .args(["--out", model_dir.to_str().unwrap()])
        .output()
        .unwrap();
    expect_success(&out, "model");
    let obj = std::fs::read_to_string(model_dir.join("model.obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("v ")));
    assert!(obj.lines().any(|l| l.starts_with("f ")));
    let prim_trace = std::fs::read_to_string(model_dir.join("prim.tsv")).unwrap();
    assert_eq!(prim_trace.lines().count(), 301); // header + 300 steps
    let mesh_trace = std::fs::read_to_string(model_dir.join("mesh.tsv")).unwrap();
    assert_eq!(mesh_trace.lines().count(), 101);

    // Primitive list exports to a standalone OBJ.
    let obj2 = tmp.path().join("prims.obj");
    let out = primesh()
        .args(["export-obj", "--primitives", model_dir.join("primitives.txt").to_str().unwrap()])
        .args(["--out", obj2.to_str().unwrap()])
        .output()
        .unwrap();
    expect_success(&out, "export-obj");
    assert!(std::fs::read_to_string(&obj2).unwrap().lines().any(|l| l.starts_with("f ")));

    // Evaluation over the dataset with both checkpoints.
    let metrics = tmp.path().join("metrics.csv");
    let out = primesh()
        .args(["--config", cfg, "eval", "--dataset", data.to_str().unwrap()])
        .args(["--prim-checkpoint", prim_ckpt.to_str().unwrap()])
        .args(["--mesh-checkpoint", mesh_ckpt.to_str().unwrap()])
        .args(["--out", metrics.to_str().unwrap()])
        .output()
        .unwrap();
    expect_success(&out, "eval");
    let metrics = std::fs::read_to_string(metrics).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next().unwrap(), "mode,category,accumulated_reward,iou,chamfer");
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|r| r.starts_with("prim,boxy-tables,")));
    assert!(rows.iter().any(|r| r.starts_with("mesh,boxy-tables,")));
}

#[test]
fn run_scheme_emits_metric_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_micro_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let data = tmp.path().join("data");
    let runs = tmp.path().join("runs");
    let out = primesh()
        .args(["--config", cfg, "gen-data", "--count", "1", "--category", "boxy-planes"])
        .args(["--seed", "2", "--out", data.to_str().unwrap()])
        .output()
        .unwrap();
    expect_success(&out, "gen-data");
    let out = primesh()
        .env("PRIMESH_RUN_ROOT", runs.to_str().unwrap())
        .args(["--config", cfg, "run-scheme", "--dataset", data.to_str().unwrap()])
        .args(["--mode", "dagger_star", "--run", "s0"])
        .output()
        .unwrap();
    expect_success(&out, "run-scheme");
    let metrics = std::fs::read_to_string(runs.join("s0").join("metrics.csv")).unwrap();
    assert!(metrics.lines().any(|r| r.starts_with("dagger_star,boxy-planes,")));
    // Unknown modes are rejected up front.
    let out = primesh()
        .args(["--config", cfg, "run-scheme", "--dataset", data.to_str().unwrap()])
        .args(["--mode", "nonsense", "--run", "s1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
