use std::io::Write;
use std::process::Command;

use ppipower_cli::api::dispatch;
use ppipower_cli::run_cli;
use serde_json::{json, Value};

fn cli(args: &[&str]) -> ppipower_cli::CliOutput {
    run_cli(std::iter::once("ppipower").chain(args.iter().copied()))
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .to_string()
}

#[test]
fn mean_plan_examples() {
    let out = cli(&["n", "--sigma2", "1", "--rho2", "0.49", "--N", "5000", "--delta", "0.2"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(value(&out.stdout, "n_star"), "102");
    assert_eq!(value(&out.stdout, "classical_n"), "197");
    let vanilla = cli(&["n", "--sigma2", "1", "--rho2", "0.49", "--N", "5000", "--delta", "0.2", "--method", "ppi"]);
    assert_eq!(value(&vanilla.stdout, "n_star"), "123");
    let classical =
        cli(&["n", "--sigma2", "1", "--rho2", "0.49", "--N", "5000", "--delta", "0.2", "--method", "classical"]);
    assert_eq!(value(&classical.stdout, "n_star"), "197");
}

#[test]
fn binary_calibration() {
    let out = cli(&["calibrate", "--binary", "--p", "0.3", "--se", "0.85", "--sp", "0.85"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let rho: f64 = value(&out.stdout, "rho").parse().unwrap();
    assert!((rho - 0.6683).abs() < 5e-4, "{rho}");
    let missing = cli(&["calibrate", "--binary", "--p", "0.3", "--se", "0.85"]);
    assert_eq!(missing.code, 2);
    assert!(missing.stderr.contains("--sp"));
}

#[test]
fn pilot_file_calibration() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "y,f").unwrap();
    for (y, f) in [(1.0, 0.9), (2.0, 2.2), (3.0, 2.7), (4.0, 4.4), (5.0, 4.8)] {
        writeln!(file, "{y},{f}").unwrap();
    }
    let path = file.path().to_str().unwrap();
    let out = cli(&["calibrate", "--pilot", path, "--r", "0.1", "--json"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v: Value = serde_json::from_str(&out.stdout).unwrap();
    assert!((v["var_y"].as_f64().unwrap() - 2.5).abs() < 1e-12);
    assert!(v["lambda"].as_f64().unwrap() > 0.8);
    let gone = cli(&["calibrate", "--pilot", "/nonexistent/pilot.csv"]);
    assert_eq!(gone.code, 4);
}

#[test]
fn power_at_plan_matches_plan() {
    let base = ["--sigma2", "1", "--rho2", "0.49", "--N", "5000", "--delta", "0.2"];
    let mut args = vec!["power", "--n", "102"];
    args.extend(base);
    let at = cli(&args);
    assert_eq!(at.code, 0, "{}", at.stderr);
    let p: f64 = value(&at.stdout, "power").parse().unwrap();
    let mut args = vec!["power", "--n", "101"];
    args.extend(base);
    let below: f64 = value(&cli(&args).stdout, "power").parse().unwrap();
    assert!(p >= 0.8 && below < 0.8, "{below} {p}");
    let tbt = cli(&["power", "--design", "two-by-two", "--n", "90", "--p0", "0.2", "--p1", "0.4", "--rho0", "0",
        "--rho1", "0", "--measure", "RR"]);
    assert_eq!(value(&tbt.stdout, "n_other"), "90");
    assert!(value(&tbt.stdout, "power").parse::<f64>().unwrap() >= 0.8);
}

#[test]
fn curve_csv_output() {
    let out = cli(&["n", "--sigma2", "1", "--rho2", "0.49", "--N", "5000", "--delta", "0.2", "--csv"]);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(lines[0], "n,power");
    assert_eq!(lines.len(), 101);
    let powers: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(powers.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["n", "--sigma2", "1", "--rho2", "0.49"]).code, 2);
    assert_eq!(cli(&["n", "--sigma2", "1", "--rho2", "1.5", "--delta", "0.2"]).code, 2);
    assert_eq!(cli(&["n", "--bogus"]).code, 2);
    let infeasible = cli(&["n", "--sigma2", "1", "--rho2", "0", "--N", "10", "--delta", "0.2", "--method", "ppi"]);
    assert_eq!(infeasible.code, 3);
    assert!(infeasible.stderr.contains("min_pool=197"), "{}", infeasible.stderr);
    assert_eq!(cli(&["n", "--sigma2", "1", "--rho2", "0.5", "--delta", "0"]).code, 3);
    assert_eq!(cli(&["simulate", "--config", "/nonexistent.toml"]).code, 4);
    let help = cli(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("simulate"));
}

/// `--json` prints exactly what the service returns for the same request.
#[test]
fn cli_json_matches_service() {
    let cases: Vec<(Vec<&str>, &str, Value)> = vec![
        (
            vec!["--sigma2", "1", "--rho2", "0.49", "--N", "5000", "--delta", "0.2"],
            "/v1/plan/mean",
            json!({"sigma2": 1, "rho2": 0.49, "N": 5000, "delta": 0.2}),
        ),
        (
            vec!["--design", "two-sample", "--p", "0.3", "--se", "0.85", "--sp", "0.85", "--N", "2000", "--kappa", "2",
                "--delta", "0.1", "--method", "vanilla"],
            "/v1/plan/two-sample",
            json!({"p": 0.3, "se": 0.85, "sp": 0.85, "N": 2000, "kappa": 2, "delta": 0.1, "method": "vanilla"}),
        ),
        (
            vec!["--design", "paired", "--sigma2", "0.8", "--mse", "0.3", "--delta", "0.15", "--power", "0.9"],
            "/v1/plan/paired",
            json!({"sigma2": 0.8, "mse": 0.3, "delta": 0.15, "power": 0.9}),
        ),
        (
            vec!["--design", "two-by-two", "--p0", "0.2", "--p1", "0.4", "--se", "0.9", "--sp", "0.9", "--measure", "OR"],
            "/v1/plan/two-by-two",
            json!({"p0": 0.2, "p1": 0.4, "se": 0.9, "sp": 0.9, "measure": "OR"}),
        ),
        (
            vec!["--design", "regression", "--v-yy", "2", "--v-ff", "2", "--v-yf", "1.4", "--N", "1000", "--delta", "0.3"],
            "/v1/plan/regression",
            json!({"v_yy": 2, "v_ff": 2, "v_yf": 1.4, "N": 1000, "delta": 0.3}),
        ),
    ];
    for (flags, path, body) in cases {
        let mut args = vec!["n", "--json"];
        args.extend(flags);
        let out = cli(&args);
        assert_eq!(out.code, 0, "{path}: {}", out.stderr);
        let (status, from_api) = dispatch("POST", path, Some("application/json"), body.to_string().as_bytes());
        assert_eq!(status, 200, "{from_api}");
        assert_eq!(out.stdout, format!("{}\n", serde_json::to_string_pretty(&from_api).unwrap()), "{path}");
    }
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "design = \"one_sample_cont\"\nreplicates = 30\nseed = 9\nkind = \"grid\"\n\n[grid]\nn = [20]\nN = [200]\nquality = [0.5, 0.9]\ndelta = [0.2]\n",
    )
    .unwrap();
    let out_path = dir.path().join("out.csv");
    let out = cli(&["simulate", "--config", config.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("design,n,N,"));
    let again = cli(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(again.stdout, text);
    let cfg = config.to_str().unwrap();
    let seeded = cli(&["simulate", "--config", cfg, "--seed", "10"]);
    assert_eq!(seeded.stdout, cli(&["simulate", "--config", cfg, "--seed", "10"]).stdout);
    assert_ne!(seeded.stdout, text);
    std::fs::write(&config, "design = \"one_sample_cont\"\nseed = 1\nkind = \"grid\"\n").unwrap();
    assert_eq!(cli(&["simulate", "--config", config.to_str().unwrap()]).code, 2);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ppipower");
    let ok = Command::new(bin).args(["n", "--sigma2", "1", "--rho2", "0.49", "--N", "5000", "--delta", "0.2"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("n_star=102"));
    let bad = Command::new(bin).args(["n", "--sigma2", "1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let infeasible = Command::new(bin)
        .args(["n", "--sigma2", "1", "--rho2", "0", "--N", "10", "--delta", "0.2", "--method", "ppi"])
        .output()
        .unwrap();
    assert_eq!(infeasible.status.code(), Some(3));
}

#[test]
fn text_and_json_agree() {
    let flags = ["--design", "two-sample", "--sigma2", "1", "--rho2", "0.3", "--N", "800", "--kappa", "1.5", "--delta", "0.25"];
    let text = cli(&[&["n"], &flags[..]].concat()).stdout;
    let json: Value = serde_json::from_str(&cli(&[&["n", "--json"], &flags[..]].concat()).stdout).unwrap();
    let mut checked = 0;
    for line in text.lines() {
        let (key, shown) = line.split_once('=').unwrap();
        let v = &json[key];
        let want = match v {
            Value::Number(n) if n.is_u64() => n.to_string(),
            Value::Number(n) => ppipower_cli::cli::format_g(n.as_f64().unwrap()),
            Value::String(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Array(a) => a.iter().map(|x| x.as_str().unwrap().to_string()).collect::<Vec<_>>().join(","),
            other => panic!("{key}: unexpected {other}"),
        };
        assert_eq!(shown, want, "{key}");
        checked += 1;
    }
    assert!(checked >= 8);
    assert_eq!(value(&text, "n_star").parse::<u64>().unwrap(), json["n_star"].as_u64().unwrap());
}

#[test]
fn zero_correlation_recovers_classical() {
    let out = cli(&["n", "--design", "one-sample", "--sigma2", "1", "--rho2", "0", "--N", "5000", "--delta", "0.2"]);
    assert_eq!(value(&out.stdout, "n_star"), "197");
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&path).unwrap();
            ppipower::SimConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
