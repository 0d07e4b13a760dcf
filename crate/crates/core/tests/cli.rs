use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cf-handoff");

fn cli(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut c = Command::new(BIN);
    c.args(args).env("RUST_LOG", "warn").env_remove("CF_HANDOFF_OUT_DIR");
    if let Some(p) = out_env {
        c.env("CF_HANDOFF_OUT_DIR", p);
    }
    c.output().expect("spawn cli")
}

const TINY: [&str; 9] = [
    "run",
    "--profile",
    "desk",
    "--trials",
    "1",
    "--scheme",
    "lsf_time",
    "--set",
    "mobility.trip_cycles=3",
];

#[test]
fn env_var_sets_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&TINY, Some(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cycles.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn explicit_out_wins_over_env() {
    let env_dir = tempfile::tempdir().unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let mut args = TINY.to_vec();
    let p = out_dir.path().to_str().unwrap();
    args.extend(["--out", p]);
    assert_eq!(cli(&args, Some(env_dir.path())).status.code(), Some(0));
    assert!(out_dir.path().join("cycles.csv").exists());
    assert!(!env_dir.path().join("cycles.csv").exists());
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad_key = TINY.to_vec();
    bad_key.extend(["--set", "engine.bogus=1"]);
    assert_eq!(cli(&bad_key, Some(dir.path())).status.code(), Some(1));
    let mut infeasible = TINY.to_vec();
    infeasible.extend(["--set", "network.num_aps=5"]);
    assert_eq!(cli(&infeasible, Some(dir.path())).status.code(), Some(1));
    let mut bad_scheme = TINY.to_vec();
    bad_scheme[6] = "nope";
    assert_eq!(cli(&bad_scheme, Some(dir.path())).status.code(), Some(1));
}

#[test]
fn missing_config_file_exits_3() {
    let out = cli(&["run", "--config", "/nonexistent/cfg.json"], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let mut args = TINY.to_vec();
    let p = blocker.join("sub");
    args.extend(["--out", p.to_str().unwrap()]);
    assert_eq!(cli(&args, None).status.code(), Some(3));
}

#[test]
fn config_file_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"profile":"desk","mobility":{"trip_cycles":2},"seeds":{"trials":1},"engine":{"schemes":["lsf_threshold"]}}"#,
    )
    .unwrap();
    let out = dir.path().join("sweep");
    let o = cli(
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--param",
            "engine.r_threshold_nats",
            "--values",
            "0,100",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let quiet = std::fs::read_to_string(out.join("engine.r_threshold_nats=0").join("cycles.csv")).unwrap();
    assert!(quiet.lines().skip(1).all(|l| l.split(',').nth(4) == Some("0")));
    assert!(out.join("engine.r_threshold_nats=100").join("cycles.csv").exists());
}

#[test]
fn quick_validation_passes() {
    let o = cli(&["validate", "--quick"], None);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS [pbvi-vs-expectimax]")));
    assert!(!stdout.contains("FAIL"));
}
