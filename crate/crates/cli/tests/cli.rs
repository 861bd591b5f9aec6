use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use bdsde_lab_cli::{bench_kernel, parse_config, run_experiment, Check, Mode, Status};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn small(checks: &str, preset: &str) -> String {
    format!("[grid]\nN = 8\n[paths]\nM_W = 256\nM_B = 8\n[problem]\npreset = {preset}\n[verify]\nchecks = {checks}\n")
}

#[test]
fn shift_pair_matches_golden() {
    let cfg = parse_config(&read(&golden("comparison_shift.conf"))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&cfg, dir.path(), Mode::Run, 1).unwrap();
    assert!(m.all_pass);
    assert_eq!(m.checks[0].metrics["strict_fraction"], 1.0);
    assert_eq!(
        read(&dir.path().join("comparison.csv")),
        read(&golden("comparison.csv"))
    );
    assert_eq!(read(&dir.path().join("checks.csv")), read(&golden("checks.csv")));
}

#[test]
fn regression_field_matches_golden() {
    let cfg = parse_config(&read(&golden("field_small.conf"))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path(), Mode::Run, 2).unwrap();
    assert_eq!(read(&dir.path().join("field.csv")), read(&golden("field.csv")));
}

#[test]
fn manifest_echo_replays_byte_identically() {
    let cfg = parse_config(&small("comparison, monotonicity, q_bounds", "paper_arctan")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m = run_experiment(&cfg, a.path(), Mode::Run, 1).unwrap();
    let echo: serde_json::Value = serde_json::from_str(&read(&a.path().join("manifest.json"))).unwrap();
    let replay = parse_config(echo["config_echo"].as_str().unwrap()).unwrap();
    let m2 = run_experiment(&replay, b.path(), Mode::Run, 3).unwrap();
    assert_eq!(m.config_hash, m2.config_hash);
    for f in ["comparison.csv", "monotonicity.csv", "q_bounds.csv", "checks.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_changes_hash_and_output() {
    let mut cfg = parse_config(&small("q_bounds", "zero")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let h1 = run_experiment(&cfg, a.path(), Mode::Run, 1).unwrap().config_hash;
    cfg.seed += 1;
    let h2 = run_experiment(&cfg, b.path(), Mode::Run, 1).unwrap().config_hash;
    assert_ne!(h1, h2);
    assert_ne!(
        read(&a.path().join("q_bounds.csv")),
        read(&b.path().join("q_bounds.csv"))
    );
}

#[test]
fn output_dir_does_not_enter_hash() {
    let mut cfg = parse_config(&small("audit", "zero")).unwrap();
    let h1 = bdsde_lab_cli::experiment::config_hash(&cfg);
    cfg.out_dir = PathBuf::from("elsewhere");
    assert_eq!(h1, bdsde_lab_cli::experiment::config_hash(&cfg));
}

#[test]
fn inapplicable_check_fails_run_but_skips_in_verify() {
    // paper_arctan has a nonzero loading and no forward leg
    let cfg = parse_config(&small("negative_moment", "paper_arctan")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment(&cfg, dir.path(), Mode::Run, 1).unwrap();
    assert_eq!(run.checks[0].status, Status::Fail);
    assert_eq!(run.exit_code(), 1);

    let cfg = parse_config(&small("", "identity_terminal")).unwrap();
    let v = run_experiment(&cfg, dir.path(), Mode::Verify, 1).unwrap();
    assert_eq!(v.checks.len(), Check::ALL.len());
    let skipped: Vec<&str> = v
        .checks
        .iter()
        .filter(|c| c.status == Status::Skipped)
        .map(|c| c.name)
        .collect();
    assert!(
        skipped.contains(&"forward_moment") && skipped.contains(&"field"),
        "{skipped:?}"
    );
    // the stated upper envelope fails for x < -M; see the ledger
    let failed: Vec<&str> = v
        .checks
        .iter()
        .filter(|c| c.status == Status::Fail)
        .map(|c| c.name)
        .collect();
    assert_eq!(failed, ["sandwich"]);
    let sandwich = v.checks.iter().find(|c| c.name == "sandwich").unwrap();
    assert_eq!(sandwich.metrics["sandwich_fraction"], 1.0);
    assert_eq!(sandwich.metrics["lower_envelope_fraction"], 1.0);
    assert!(sandwich.metrics["upper_envelope_fraction"] < 0.99);
}

#[test]
fn solver_abort_writes_partial_manifest() {
    // ξ = x³ overflows at x = 1e150
    let text = small("comparison, monotonicity", "cubic_terminal").replace("[verify]", "x = 1e150\n[verify]");
    let cfg = parse_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&cfg, dir.path(), Mode::Run, 1).unwrap();
    assert!(m.aborted.is_some(), "{:#?}", m.checks);
    assert_eq!(m.checks.len(), 1);
    assert_eq!(m.exit_code(), 1);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn bench_checksums_ignore_thread_count() {
    let cfg = parse_config(&small("", "linear")).unwrap();
    let one = bench_kernel(&cfg, 1).unwrap();
    let many = bench_kernel(&cfg, 4).unwrap();
    for (a, b) in one.kernels.iter().zip(&many.kernels) {
        assert_eq!(a.checksum, b.checksum, "{}", a.kernel);
        assert!(a.matches_reference && b.matches_reference);
        assert!(a.throughput > 0.0 && a.reps >= 5);
    }
    assert!(one.to_csv().starts_with("kernel,reps,"));
}

#[test]
fn binary_exit_status_follows_checks() {
    let exe = env!("CARGO_BIN_EXE_db-lab");
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(exe)
        .args(["run", "--config"])
        .arg(golden("comparison_shift.conf"))
        .arg("--out-dir")
        .arg(dir.path().join("ok"))
        .args(["--threads", "2"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, small("negative_moment", "paper_arctan")).unwrap();
    let fail = Command::new(exe)
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("bad"))
        .env("DB_LAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(fail.status.code(), Some(1));

    fs::write(&cfg, "[grid]\nN = 0\n").unwrap();
    let invalid = Command::new(exe).args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(invalid.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("line 2: step_count must be ≥ 1"));
}
