//! End-to-end checks of the command-line surface.

use std::path::Path;
use std::process::Command;

fn lawnsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lawnsim"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn lawnsim");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tiny_desk_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    // Desk scale shrunk to a smoke-test budget.
    std::fs::write(
        &path,
        r#"
master_seed = 99

[world]
side_m = 200.0
scene_alt_m = 60.0
grid_rows = 20
grid_cols = 20
building_count = 2
building_len_range_m = [30.0, 60.0]
building_height_scale_m = 30.0
building_height_range_m = [20.0, 50.0]
user_count = 3
demand_mbits = 2.0
bs_position_m = [0.0, 0.0, 10.0]
uav_start_m = [100.0, 100.0, 45.0]

[timing]
max_slots = 25

[kinematics]
v_max_mps = 20.0
max_flight_alt_m = 55.0

[channel]
bandwidth_hz = 1.0e6

[net]
preset = "desk"

[td3]
batch = 8
buffer_capacity = 4000
max_episodes = 2
warmup_random_slots = 30

[mode]
dt_enabled = true
algorithm = "td3"
"#,
    )
    .unwrap();
    path
}

#[test]
fn gen_env_is_deterministic_and_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    run_ok(lawnsim().args([
        "gen-env",
        "--preset",
        "desk",
        "--seed",
        "5",
        "--out",
        a.to_str().unwrap(),
    ]));
    run_ok(lawnsim().args([
        "gen-env",
        "--preset",
        "desk",
        "--seed",
        "5",
        "--out",
        b.to_str().unwrap(),
    ]));
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());
    let parsed: serde_json::Value = serde_json::from_slice(&bytes_a).unwrap();
    assert_eq!(parsed["users"].as_array().unwrap().len(), 3);
}

#[test]
fn link_budget_contains_golden_row() {
    let out = run_ok(lawnsim().args([
        "link-budget",
        "--preset",
        "paper",
        "--d-min",
        "100",
        "--d-max",
        "100",
        "--step",
        "1",
    ]));
    // 100 m at 2 GHz: free-space path loss 78.462 dB.
    assert!(out.contains("100.0,78.462"), "table was:\n{out}");
}

#[test]
fn schedule_writes_order_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sched");
    run_ok(lawnsim().args([
        "schedule",
        "--preset",
        "desk",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]));
    let sched = std::fs::read_to_string(out_dir.join("schedule.csv")).unwrap();
    assert!(sched.contains("rank,user_id"));
    let trace = std::fs::read_to_string(out_dir.join("schedule_trace.csv")).unwrap();
    // Default annealing budget: 4000 iterations plus header/comment lines.
    assert_eq!(trace.lines().filter(|l| !l.starts_with('#')).count(), 4001);
}

#[test]
fn train_eval_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_desk_config(dir.path());
    let train_dir = dir.path().join("run");
    run_ok(lawnsim().args([
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        train_dir.to_str().unwrap(),
        "--log-every",
        "0",
    ]));
    let csv = std::fs::read_to_string(train_dir.join("training.csv")).unwrap();
    assert!(csv.contains("# variant=td3-dt"));
    assert_eq!(
        csv.lines().filter(|l| !l.starts_with('#')).count(),
        3,
        "expected header + 2 episode rows:\n{csv}"
    );

    let eval_dir = dir.path().join("eval");
    let out = run_ok(lawnsim().args([
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        train_dir.join("checkpoint.bin").to_str().unwrap(),
        "--episodes",
        "1",
        "--out-dir",
        eval_dir.to_str().unwrap(),
        "--trajectories",
    ]));
    // A single episode reports zero spread.
    assert!(out.contains("± 0.0"), "{out}");

    let traj = eval_dir.join("trajectories/trajectory_ep000.json");
    let svg = dir.path().join("traj.svg");
    run_ok(lawnsim().args([
        "plot",
        "--trajectory",
        traj.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]));
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg"));
    assert!(svg_text.contains("altitude profile"));
}

#[test]
fn eval_rejects_incompatible_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_desk_config(dir.path());
    let train_dir = dir.path().join("run");
    run_ok(lawnsim().args([
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        train_dir.to_str().unwrap(),
        "--log-every",
        "0",
    ]));
    // The paper preset wants a different net and grid.
    let out = lawnsim()
        .args([
            "eval",
            "--preset",
            "paper",
            "--checkpoint",
            train_dir.join("checkpoint.bin").to_str().unwrap(),
            "--episodes",
            "1",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("incompatible"), "stderr: {stderr}");
}

#[test]
fn unknown_config_key_fails_loudly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[world]\nsidez_m = 4.0\n").unwrap();
    let out = lawnsim()
        .args(["config", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sidez_m"));
}
