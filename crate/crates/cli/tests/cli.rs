use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fresh-csma"))
        .args(args)
        .env_remove("FRESH_CSMA_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn verify_passes_with_exit_zero() {
    let o = cli(&["verify", "thm1", "--trials", "200", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("thm1: PASS"));
}

#[test]
fn verify_all_runs_every_check() {
    let o = cli(&["verify", "all", "--trials", "300"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 6);
}

#[test]
fn unknown_theorem_is_usage_error() {
    assert_eq!(cli(&["verify", "thm9"]).status.code(), Some(2));
}

#[test]
fn missing_subcommand_is_usage_error() {
    assert_eq!(cli(&[]).status.code(), Some(2));
    assert_eq!(cli(&["preset"]).status.code(), Some(2));
}

#[test]
fn preset_list_and_unknown() {
    let o = cli(&["preset", "list"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 9);
    assert_eq!(cli(&["preset", "fig99"]).status.code(), Some(2));
}

#[test]
fn preset_is_deterministic_on_stdout() {
    let args = ["preset", "fig10_aoii", "--horizon", "500", "--seed", "3"];
    let (a, b) = (cli(&args), cli(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 1 + 5 * 3);
}

#[test]
fn preset_writes_to_output_dir_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fresh-csma"))
        .args(["preset", "fig7_B_collisions", "--horizon", "200"])
        .env("FRESH_CSMA_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("fig7_B_collisions.csv")).unwrap();
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn simulate_from_config_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "scenario = \"cfg\"\npolicies = [\"max_weight\"]\nn_sources = 4\n").unwrap();
    let out = dir.path().join("out.csv");
    let o = cli(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--horizon",
        "400",
        "--seed",
        "8",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("cfg,max_weight,4,"));
    assert!(row.ends_with(",400,400,8"));
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "scenario = \"x\"\npolicies = [\"max_weight\"]\nunknown_key = 1\n").unwrap();
    assert_eq!(cli(&["simulate", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cli(&["simulate", "/nonexistent.toml"]).status.code(), Some(2));
}

#[test]
fn sweep_over_beta() {
    let o = cli(&[
        "sweep",
        "--param",
        "beta",
        "--values",
        "1.5,1.2",
        "--policies",
        "near_realistic_fresh_csma",
        "--n-sources",
        "5",
        "--horizon",
        "300",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",beta,1.2,"));
}

#[test]
fn sweep_aoii_policy_needs_markov_q() {
    let base = ["sweep", "--param", "n_sources", "--values", "3", "--policies", "max_aoii", "--horizon", "100"];
    assert_eq!(cli(&base).status.code(), Some(2));
    let mut with_q = base.to_vec();
    with_q.extend(["--markov-q", "0.05", "--defaults", "aoii"]);
    assert_eq!(cli(&with_q).status.code(), Some(0));
}
