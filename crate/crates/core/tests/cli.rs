use std::path::Path;
use std::process::{Command, Output};

use reinsure::cli::RunConfig;

fn reinsure(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reinsure"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn calibrate_reports_reference_parameters() {
    let out = reinsure(&["calibrate"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for value in [
        "1.88895136",
        "5.82862950",
        "2.15993083",
        "-5.72514726",
        "2.47289841",
        "6.20126113",
        "5.19906615",
        "0.609431364",
    ] {
        assert!(text.contains(value), "missing {value} in\n{text}");
    }
}

#[test]
fn calibrate_json_is_machine_readable() {
    let out = reinsure(&["calibrate", "--json", "--regime", "es_q"]);
    assert_eq!(out.status.code(), Some(0));
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let q = &reports[0];
    assert_eq!(q["regime"], "es_q");
    assert!((q["lambda"].as_f64().unwrap() - 5.199066).abs() < 1e-4);
    assert!((q["second"].as_f64().unwrap() - 0.6094314).abs() < 1e-4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(reinsure(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        reinsure(&["calibrate", "--regime", "cvar"]).status.code(),
        Some(3)
    );

    let unknown = write_config(dir.path(), "model.q = 1\n");
    assert_eq!(
        reinsure(&["calibrate", "--config", &unknown]).status.code(),
        Some(3)
    );

    let missing = dir.path().join("absent.cfg");
    assert_eq!(
        reinsure(&["calibrate", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );

    let poor = write_config(
        dir.path(),
        "model.k_tilde = 0\nconstraint.kind = unconstrained\n",
    );
    let out = reinsure(&["calibrate", "--config", &poor]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn loose_var_short_circuits_to_unconstrained() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "constraint.epsilon = 0.999\nconstraint.kind = var\n",
    );
    let out = reinsure(&["calibrate", "--config", &cfg, "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports[0]["unconstrained_optimal"], true);
    assert!((reports[0]["lambda"].as_f64().unwrap() - 1.888951).abs() < 1e-4);
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = reinsure(&[
            "simulate",
            "--seed",
            "2020",
            "--steps",
            "200",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let first = std::fs::read(a.join("trace_seed2020.csv")).unwrap();
    assert_eq!(first, std::fs::read(b.join("trace_seed2020.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("t,W,Z,uncontrolled,unconstrained_X_tilde,unconstrained_pi,"));
    assert_eq!(text.lines().count(), 202);
}

#[test]
fn payoff_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = reinsure(&[
        "payoff",
        "--regime",
        "strict,var",
        "--points",
        "50",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("payoff.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("z,unconstrained,strict,var"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn verify_passes_and_detects_corruption() {
    let ok = reinsure(&["verify"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(!stdout(&ok).contains("FAIL"));

    let bad = reinsure(&[
        "verify",
        "--regime",
        "strict",
        "--samples",
        "20000",
        "--corrupt-lambda",
        "1.01",
    ]);
    assert_eq!(bad.status.code(), Some(5));
    assert!(stdout(&bad).contains("FAIL  closed-form budget [strict]"));
}

#[test]
fn config_file_round_trips_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::parse(
        "model.x = 2.5\nconstraint.kind = strict, es_p\nsimulation.seeds = 11, 12\n",
    )
    .unwrap();
    cfg.output_dir = dir.path().join("out");
    assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    let path = write_config(dir.path(), &cfg.to_text());
    let out = reinsure(&["simulate", "--config", &path, "--steps", "20"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(cfg.output_dir.join("trace_seed11.csv").exists());
    assert!(cfg.output_dir.join("trace_seed12.csv").exists());
}
