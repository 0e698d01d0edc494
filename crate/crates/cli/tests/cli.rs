use std::fs;
use std::path::Path;
use std::process::Command;

use trimix_cli::{run, RunManifest, MANIFEST_NAME};

fn trimix(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_trimix"))
        .args(args)
        .env_remove("TRIMIX_SEED")
        .output()
        .expect("binary runs")
}

fn run_in(out: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["trimix", "--out", out.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(argv)
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::load(&dir.join(MANIFEST_NAME)).unwrap()
}

#[test]
fn missing_modulus_is_a_usage_error() {
    let out = trimix(&["simulate", "--n", "3", "--horizon", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--m"), "{stderr}");
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn invalid_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(
        trimix(&[
            "--out",
            d,
            "simulate",
            "--n",
            "1",
            "--m",
            "3",
            "--horizon",
            "1"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        trimix(&["--out", d, "exact-tv", "--n", "3", "--m", "3", "--t-max", "2.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        trimix(&["--out", d, "exact-tv", "--n", "9", "--m", "9", "--t-max", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        trimix(&["--out", d, "--threads", "0", "tmix", "--n", "3", "--m", "3"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn help_exits_zero() {
    let out = trimix(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "simulate",
        "exact-tv",
        "tmix",
        "spectral",
        "observe",
        "scaling",
        "bounds",
        "projection-tv",
        "rerun",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn simulate_writes_one_log_per_replica_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--n",
        "3",
        "--m",
        "3",
        "--variant",
        "discrete",
        "--horizon",
        "10",
        "--replicas",
        "2",
        "--seed",
        "7",
    ];
    assert_eq!(run_in(a.path(), &args), 0);
    let mut with_threads = vec!["--threads", "1"];
    with_threads.extend_from_slice(&args);
    assert_eq!(run_in(b.path(), &with_threads), 0);
    for name in ["log_00000.jsonl", "log_00001.jsonl"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
    let m = manifest(a.path());
    assert_eq!(m.command, "simulate");
    assert_eq!(m.seed, Some(7));
    assert_eq!(m.outputs.len(), 2);
    assert_ne!(
        fs::read(a.path().join("log_00000.jsonl")).unwrap(),
        fs::read(a.path().join("log_00001.jsonl")).unwrap()
    );
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_trimix"))
        .args([
            "--out",
            d,
            "simulate",
            "--n",
            "3",
            "--m",
            "5",
            "--horizon",
            "2",
        ])
        .env("TRIMIX_SEED", "41")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let m = manifest(dir.path());
    assert_eq!(m.seed, Some(41));
    assert!(m.argv.windows(2).any(|w| w[0] == "--seed" && w[1] == "41"));

    let bad = Command::new(env!("CARGO_BIN_EXE_trimix"))
        .args([
            "--out",
            d,
            "simulate",
            "--n",
            "3",
            "--m",
            "5",
            "--horizon",
            "2",
        ])
        .env("TRIMIX_SEED", "abc")
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
}

#[test]
fn exact_tv_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run_in(
            dir.path(),
            &["exact-tv", "--n", "3", "--m", "3", "--t-max", "100"]
        ),
        0
    );
    let text = fs::read_to_string(dir.path().join("exact_tv.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,tv");
    assert_eq!(lines.len(), 102);
    let tv0: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((tv0 - (1.0 - 1.0 / 27.0)).abs() < 1e-15);
    assert_eq!(manifest(dir.path()).outputs[0].schema_version, 1);
}

#[test]
fn integral_bounds_hold() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_in(
        dir.path(),
        &[
            "bounds",
            "--lemma",
            "integral",
            "--m-max",
            "200",
            "--x-grid",
            "0.1,0.5,1,5,20",
        ],
    );
    assert_eq!(code, 0);
    let text = fs::read_to_string(dir.path().join("integral.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 5 * 199);
    assert!(text.lines().skip(1).all(|l| l.ends_with("true")));
}

#[test]
fn backwards_identity_check_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_in(
        dir.path(),
        &[
            "observe",
            "--check",
            "backwards-identity",
            "--n",
            "4",
            "--m",
            "5",
            "--replicas",
            "200",
            "--seed",
            "3",
        ],
    );
    assert_eq!(code, 0);
    let text = fs::read_to_string(dir.path().join("backwards_identity.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 200 * 3);
}

#[test]
fn every_observe_check_runs() {
    for check in [
        "decomposition",
        "hitting-time",
        "intervals",
        "ring-counter",
        "good-intervals",
        "column-z",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let horizon = if check == "good-intervals" {
            "400"
        } else {
            "30"
        };
        let code = run_in(
            dir.path(),
            &[
                "observe",
                "--check",
                check,
                "--n",
                "4",
                "--m",
                "5",
                "--replicas",
                "20",
                "--horizon",
                horizon,
            ],
        );
        assert_eq!(code, 0, "{check}");
        assert!(!manifest(dir.path()).outputs.is_empty(), "{check}");
    }
    let dir = tempfile::tempdir().unwrap();
    let short = [
        "observe",
        "--check",
        "good-intervals",
        "--n",
        "4",
        "--m",
        "5",
        "--horizon",
        "30",
    ];
    assert_eq!(run_in(dir.path(), &short), 2);
}

#[test]
fn l2_dominance_assertion_reports_failure() {
    // the exponential form is not a bound when some eigenvalue is negative
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "spectral",
        "--n",
        "3",
        "--m",
        "3",
        "--horizon",
        "1",
        "--replicas",
        "200",
        "--seed",
        "1",
    ];
    assert_eq!(run_in(dir.path(), &args), 0);
    let text = fs::read_to_string(dir.path().join("spectral.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
    assert!(text.lines().skip(1).any(|l| l.contains(",false,")));
    let mut strict = args.to_vec();
    strict.push("--assert-l2-dominance");
    assert_eq!(run_in(dir.path(), &strict), 1);
    assert!(!manifest(dir.path()).failures.is_empty());
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"command": "exact-tv", "n": 3, "m": 2, "t_max": 5}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let code = run([
        "trimix",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--t-max",
        "3",
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(out.join("exact_tv.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(manifest(&out).config.is_some());
}

#[test]
fn rerun_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let args = [
        "projection-tv",
        "--n",
        "3",
        "--m",
        "3",
        "--times",
        "0,2,5",
        "--replicas",
        "2000",
        "--seed",
        "5",
    ];
    assert_eq!(run_in(&first, &args), 0);
    let manifest_path = first.join(MANIFEST_NAME);
    let code = run([
        "trimix",
        "rerun",
        manifest_path.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        fs::read(first.join("projection_tv.csv")).unwrap(),
        fs::read(second.join("projection_tv.csv")).unwrap()
    );
}

#[test]
fn rerun_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert_eq!(
        run_in(
            &first,
            &["exact-tv", "--n", "3", "--m", "2", "--t-max", "4"]
        ),
        0
    );
    let path = first.join(MANIFEST_NAME);
    let mut m = manifest(&first);
    m.outputs[0].sha256 = "0".repeat(64);
    fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
    let second = dir.path().join("second");
    assert_eq!(
        run([
            "trimix",
            "rerun",
            path.to_str().unwrap(),
            "--out",
            second.to_str().unwrap()
        ]),
        1
    );
    // replaying into the source directory is refused
    assert_eq!(
        run([
            "trimix",
            "rerun",
            path.to_str().unwrap(),
            "--out",
            first.to_str().unwrap()
        ]),
        2
    );
}
