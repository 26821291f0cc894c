use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn gramgap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gramgap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(command: &str, dir: &TempDir, config: &str, extra: &[&str]) -> (Output, std::path::PathBuf) {
    let cfg = write_config(dir.path(), &format!("{command}.json"), config);
    let out_dir = dir.path().join(format!("out-{command}-{}", extra.join("")));
    let mut args = vec![
        command,
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    (gramgap(&args), out_dir)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const MP: &str = r#"{"ensemble": {"N": 64, "n": 256, "model": {"type": "identity"}},
    "y": 1e-5, "grid": {"x_hi": 4.2, "steps": 841}}"#;

#[test]
fn density_peaks_inside_the_bulk() {
    let dir = TempDir::new().unwrap();
    let (out, out_dir) = run("density", &dir, MP, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("density.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,density"));
    let (peak_x, _) = lines
        .map(|l| {
            let (x, d) = l.split_once(',').unwrap();
            (x.parse::<f64>().unwrap(), d.parse::<f64>().unwrap())
        })
        .fold(
            (0.0, f64::MIN),
            |best, p| if p.1 > best.1 { p } else { best },
        );
    assert!(peak_x > 0.25 && peak_x < 2.25, "peak at {peak_x}");
    let meta = json(&out_dir.join("meta.json"));
    assert_eq!(meta["points"], 841);
    assert_eq!(meta["config"]["ensemble"]["N"], 64);
    assert!((meta["mass"].as_f64().unwrap() - 1.0).abs() < 0.05);
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let (out, _) = run("density", &dir, r#"{"ensemble": {"N": 64,"#, &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let (out, _) = run(
        "density",
        &dir,
        r#"{"ensemble": {"N": 64, "n": 256, "model": {"type": "identity"}}, "y": 0}"#,
        &[],
    );
    assert_eq!(code(&out), 2);

    let (out, _) = run(
        "density",
        &dir,
        r#"{"ensemble": {"N": 64, "n": 256, "model": {"type": "identity"}}, "grdi": {}}"#,
        &[],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("grdi"));

    let (out, _) = run(
        "density",
        &dir,
        r#"{"ensemble": {"N": 4, "n": 4, "model": {"type": "identity"}}}"#,
        &[],
    );
    assert_eq!(code(&out), 2);

    assert_eq!(code(&gramgap(&["support"])), 2);
    assert_eq!(code(&gramgap(&["nonsense"])), 2);
}

#[test]
fn support_edges_match_the_closed_form() {
    let dir = TempDir::new().unwrap();
    let (out, out_dir) = run("support", &dir, MP, &[]);
    assert_eq!(code(&out), 0);
    let printed: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((printed - 0.25).abs() < 1e-2);
    let rep = json(&out_dir.join("support.json"));
    assert_eq!(rep["epsilon_at_zero"].as_f64().unwrap(), printed);
    assert_eq!(rep["intervals"].as_array().unwrap().len(), 1);
    for key in ["y", "threshold", "grid_step"] {
        assert!(rep[key].is_number(), "{key}");
    }

    let c81 = r#"{"ensemble": {"N": 81, "n": 100, "model": {"type": "identity"}},
        "y": 1e-5, "grid": {"x_hi": 4.2, "steps": 1681}}"#;
    let (out, _) = run("support", &dir, c81, &[]);
    assert_eq!(code(&out), 0);
    let eps: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((eps - 0.01).abs() < 5e-3, "{eps}");
}

#[test]
fn absurd_threshold_is_numeric_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"ensemble": {"N": 64, "n": 256, "model": {"type": "identity"}},
        "grid": {"x_hi": 4.2, "steps": 421}, "threshold": 1.0}"#;
    let (out, _) = run("support", &dir, cfg, &[]);
    assert_eq!(code(&out), 3);
}

const VERIFY: &str = r#"{"ensemble": {"N": 64, "n": 256, "model": {"type": "identity"}},
    "trials": 200, "seed": 11}"#;

#[test]
fn verify_finds_no_eigenvalues_in_the_gap() {
    let dir = TempDir::new().unwrap();
    let (out, out_dir) = run("verify", &dir, VERIFY, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out_dir.join("verdict.json"));
    assert_eq!(v["violations_in_gap"], 0);
    let eps = v["epsilon_hat"].as_f64().unwrap();
    assert!(v["min_lambda_min"].as_f64().unwrap() > eps / 2.0);
    let csv = fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert_eq!(
        csv.lines().next(),
        Some("trial,seed,lambda_min,count_in_test_interval")
    );
}

#[test]
fn verify_flags_an_interval_inside_the_bulk() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"ensemble": {"N": 64, "n": 256, "model": {"type": "identity"}},
        "trials": 20, "seed": 11, "test_interval": [0.5, 1.0]}"#;
    let (out, out_dir) = run("verify", &dir, cfg, &[]);
    assert_eq!(code(&out), 4);
    assert!(
        json(&out_dir.join("verdict.json"))["violations_in_gap"]
            .as_u64()
            .unwrap()
            > 0
    );
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, dir_a) = run("verify", &dir, VERIFY, &["--workers", "1"]);
    let (b, dir_b) = run("verify", &dir, VERIFY, &["--workers", "3"]);
    assert_eq!((code(&a), code(&b)), (0, 0));
    for name in ["verdict.json", "trials.csv"] {
        assert_eq!(
            fs::read(dir_a.join(name)).unwrap(),
            fs::read(dir_b.join(name)).unwrap(),
            "{name}"
        );
    }
    // the seed flag overrides the config
    let (c, dir_c) = run("verify", &dir, VERIFY, &["--seed", "12"]);
    assert_eq!(code(&c), 0);
    assert_eq!(json(&dir_c.join("verdict.json"))["seed"], 12);
    assert_ne!(
        fs::read(dir_a.join("trials.csv")).unwrap(),
        fs::read(dir_c.join("trials.csv")).unwrap()
    );
}

#[test]
fn scaling_recovers_the_bias_rate() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"ensemble": {"N": 32, "n": 128, "model": {"type": "identity"}},
        "sizes": [32, 64, 128], "z": [-1, 0], "trials": 4000, "seed": 20240601}"#;
    let (out, out_dir) = run("scaling", &dir, cfg, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&out_dir.join("scaling.json"));
    assert!(rep["slope"].as_f64().unwrap() <= -1.5);
    let csv = fs::read_to_string(out_dir.join("scaling.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("N,bias,stderr"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn scaling_failure_codes() {
    let dir = TempDir::new().unwrap();
    let few = r#"{"ensemble": {"N": 32, "n": 128, "model": {"type": "identity"}},
        "sizes": [32, 64, 128], "trials": 10}"#;
    let (out, _) = run("scaling", &dir, few, &[]);
    assert_eq!(code(&out), 5);
    let one = r#"{"ensemble": {"N": 32, "n": 128, "model": {"type": "identity"}},
        "sizes": [32], "trials": 100}"#;
    let (out, _) = run("scaling", &dir, one, &[]);
    assert_eq!(code(&out), 2);
}

#[test]
fn scaling_reports_variance_when_asked() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"ensemble": {"N": 8, "n": 24, "model": {"type": "exponential", "rho": [0.3, 0.7]}},
        "sizes": [8, 16, 32], "trials": 40, "variance": {"z": [0, 2], "trials": 200}}"#;
    let (out, out_dir) = run("scaling", &dir, cfg, &[]);
    // 40 trials cannot resolve the bias, but everything is still written
    assert_eq!(code(&out), 5);
    let rep = json(&out_dir.join("scaling.json"));
    let rows = rep["variance"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!(row["measured_var"].as_f64().unwrap() <= row["bound"].as_f64().unwrap());
    }
    assert_eq!(rep["variance_ratios"].as_array().unwrap().len(), 2);
}

#[test]
fn selftest_runs_without_a_config() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("self");
    let out = gramgap(&[
        "selftest",
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_eq!(code(&out), 0);
    let rep = json(&out_dir.join("selftest.json"));
    assert_eq!(rep["witnesses"], 500);
    assert_eq!(rep["witness_violations"], 0);
    assert_eq!(rep["triple_violations"], 0);
    assert_eq!(rep["jensen_violations"], 0);
}
