use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn pushsum(args: &[&str]) -> Output {
    pushsum_env(args, None)
}

fn pushsum_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pushsum"));
    cmd.args(args).env_remove("PUSHSUM_SEED");
    if let Some(s) = seed {
        cmd.env("PUSHSUM_SEED", s);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary_value(o: &Output, key: &str) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(String::from))
        .unwrap_or_else(|| panic!("no {key} in {}", stdout(o)))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lossy.csv");
    let o = pushsum(&[
        "run",
        "--config",
        scenario("lossy.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("iter,spread_z,res_x,res_y,min_y,max_u,max_v\n"));
    assert_eq!(summary_value(&o, "protocol"), "robust");
    assert_eq!(summary_value(&o, "audit_failures"), "0");
    assert_ne!(summary_value(&o, "converged_at"), "none");
}

#[test]
fn every_shipped_scenario_runs() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "reliable.toml",
        "lossy.toml",
        "pushsum.toml",
        "ring3-verify.toml",
    ] {
        let out = dir.path().join(format!("{name}.csv"));
        let o = pushsum(&[
            "run",
            "--config",
            scenario(name).to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(out.exists());
    }
}

#[test]
fn bad_x0_names_the_field_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("reliable.toml"))
        .unwrap()
        .replace("x0 = [1.0, 2.0, 3.0, 4.0, 5.0]", "x0 = [1.0, 2.0]");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let out = dir.path().join("out.csv");
    let o = pushsum(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("initial.x0"), "{}", stderr(&o));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn unknown_keys_and_missing_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("reliable.toml")).unwrap() + "\nbogus = 3\n";
    let cfg = write_config(dir.path(), "bogus.toml", &text);
    let out = dir.path().join("out.csv");
    let o = pushsum(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
    let o = pushsum(&[
        "run",
        "--config",
        "/nonexistent.toml",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = pushsum(&[
        "run",
        "--config",
        scenario("reliable.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "seed",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn leaking_mass_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("lossy.toml")).unwrap()
        + "\n[fault]\nkind = \"leak_mass\"\niteration = 10\n";
    let cfg = write_config(dir.path(), "leak.toml", &text);
    let out = dir.path().join("leak.csv");
    let o = pushsum(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mass_conservation"), "{}", stderr(&o));
    assert!(stderr(&o).contains("11"), "{}", stderr(&o));
}

#[test]
fn seed_env_applies_before_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("lossy.toml");
    let run = |name: &str, env: Option<&str>, set: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec![
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(set);
        let o = pushsum_env(&args, env);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(out).unwrap()
    };
    let by_env = run("env.csv", Some("11"), &[]);
    let by_set = run("set.csv", None, &["--set", "seed=11"]);
    let default = run("default.csv", None, &[]);
    let set_wins = run("both.csv", Some("99"), &["--set", "seed=11"]);
    assert_eq!(by_env, by_set);
    assert_ne!(by_env, default);
    assert_eq!(set_wins, by_set);
    let o = pushsum_env(&["verify", "--config", cfg.to_str().unwrap()], Some("x"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_passes_and_catches_misindexing() {
    let o = pushsum(&[
        "verify",
        "--config",
        scenario("ring3-verify.toml").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("state_matches_product"));

    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("ring3-verify.toml")).unwrap()
        + "\n[fault]\nkind = \"misindex_buffers\"\n";
    let cfg = write_config(dir.path(), "mis.toml", &text);
    let o = pushsum(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("state_matches_product at iteration"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn verify_refuses_large_networks() {
    let o = pushsum(&[
        "verify",
        "--config",
        scenario("lossy.toml").to_str().unwrap(),
        "--set",
        "n=40",
    ]);
    // x0 has five entries, so the override itself is rejected
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("lossy.toml"))
        .unwrap()
        .replace("nodes = 5", "nodes = 40")
        .replace("x0 = [1.0, 2.0, 3.0, 4.0, 5.0]", "pattern = \"spike\"");
    let cfg = write_config(dir.path(), "big.toml", &text);
    let o = pushsum(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("graph.nodes"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_csv_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let o = pushsum(&[
        "sweep",
        "--config",
        scenario("lossy.toml").to_str().unwrap(),
        "--param",
        "failure_probability",
        "--values",
        "0,0.3,0.6",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "value,converged_at,final_spread");
    assert_eq!(lines.len(), 4);
    for (line, v) in lines[1..].iter().zip(["0", "0.3", "0.6"]) {
        assert!(line.starts_with(&format!("{v},")));
        assert!(out_dir
            .join(format!("failure_probability={v}.csv"))
            .exists());
    }
}

#[test]
fn sweep_reports_failed_values_and_empty_lists() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let cfg = scenario("lossy.toml");
    let args = |values: &'static str| {
        vec![
            "sweep".to_string(),
            "--config".into(),
            cfg.to_str().unwrap().into(),
            "--param".into(),
            "failure_probability".into(),
            "--values".into(),
            values.into(),
            "--out-dir".into(),
            out_dir.to_str().unwrap().into(),
        ]
    };
    let run = |values| {
        let a = args(values);
        pushsum(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    assert_eq!(run("").status.code(), Some(1));
    let o = run("0.2,1.5");
    assert_eq!(o.status.code(), Some(1));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(out_dir.join("failure_probability=0.2.csv").exists());
}

#[test]
fn demos_run() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["reliable", "lossy", "diverging"] {
        let out = dir.path().join(format!("{name}.csv"));
        let o = pushsum(&["demo", "--name", name, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        let converged = summary_value(&o, "converged_at");
        if name == "diverging" {
            assert_eq!(converged, "none");
        } else {
            assert_ne!(converged, "none");
        }
    }
}
