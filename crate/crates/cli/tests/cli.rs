//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rct"))
}

fn temp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("rct-cli-{}-{name}", std::process::id()))
}

fn write_temp(name: &str, content: &str) -> PathBuf {
    let path = temp_path(name);
    fs::write(&path, content).expect("temp file is writable");
    path
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed with {:?}: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).expect("utf-8 output")
}

const ZERO_GRAPH: &str = r#"{"n":2,"kind":"deterministic","A":[[0.0,0.0],[0.0,0.0]]}"#;
const BERNOULLI_GRAPH: &str = r#"{"n":2,"kind":"bernoulli","p":[[0.0,0.5],[0.25,0.0]],"alpha":0.4}"#;
const OUTCOMES_CSV: &str = "a,b\n1.5,0.5\n-0.25,1.0\n";

#[test]
fn design_output_is_deterministic_per_seed() {
    let run = || {
        stdout_of(
            &bin()
                .args(["design", "--scheme", "iid", "--n", "4", "--samples", "3", "--seed", "7"])
                .output()
                .expect("binary runs"),
        )
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in lines {
        let entries: Vec<&str> = line.split(',').collect();
        assert_eq!(entries.len(), 4);
        assert!(entries.iter().all(|e| *e == "1" || *e == "-1"));
    }
}

#[test]
fn design_block_scheme_balances_every_block() {
    let out = stdout_of(
        &bin()
            .args([
                "design",
                "--scheme",
                "block",
                "--blocks",
                "[[0,1],[2,3]]",
                "--samples",
                "20",
                "--seed",
                "11",
            ])
            .output()
            .expect("binary runs"),
    );
    for line in out.lines() {
        let signs: Vec<i64> = line.split(',').map(|e| e.parse().expect("integer")).collect();
        assert_eq!(signs.len(), 4);
        assert_eq!(signs[0] + signs[1], 0, "first block balances");
        assert_eq!(signs[2] + signs[3], 0, "second block balances");
    }
}

#[test]
fn design_gsw_scheme_reads_covariates_file() {
    let cov = write_temp("cov.csv", "0.5,1.0\n-0.3,0.2\n0.8,-1.1\n0.1,0.9\n");
    let out = stdout_of(
        &bin()
            .args(["design", "--scheme", "gsw", "--phi", "0.5", "--samples", "5", "--seed", "2"])
            .arg("--covariates")
            .arg(&cov)
            .output()
            .expect("binary runs"),
    );
    assert_eq!(out.lines().count(), 5);
    for line in out.lines() {
        assert!(line.split(',').all(|e| e == "1" || e == "-1"));
    }
}

#[test]
fn design_allocation_rejects_odd_population_with_domain_exit_code() {
    let output = bin()
        .args(["design", "--scheme", "allocation", "--n", "5"])
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}

#[test]
fn missing_scheme_argument_is_a_usage_error() {
    let output = bin()
        .args(["design", "--scheme", "gsw", "--n", "4"])
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(2), "gsw without covariates is a usage error");
    let output = bin().args(["design", "--no-such-flag"]).output().expect("binary runs");
    assert_eq!(output.status.code(), Some(2), "clap rejects unknown flags");
}

fn simulate_report(graph: &PathBuf, outcomes: &PathBuf, estimator: &str, out_name: &str) -> serde_json::Value {
    let out = temp_path(out_name);
    let output = bin()
        .args(["simulate", "--design-scheme", "iid", "--replicates", "2000", "--seed", "3"])
        .args(["--estimator", estimator])
        .arg("--graph")
        .arg(graph)
        .arg("--outcomes")
        .arg(outcomes)
        .arg("--out")
        .arg(&out)
        .output()
        .expect("binary runs");
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    serde_json::from_str(&fs::read_to_string(&out).expect("report written"))
        .expect("report is valid json")
}

#[test]
fn simulate_estimators_coincide_without_interference() {
    let graph = write_temp("zero.json", ZERO_GRAPH);
    let outcomes = write_temp("out-a.csv", OUTCOMES_CSV);
    let ht = simulate_report(&graph, &outcomes, "ht", "ht.json");
    let net = simulate_report(&graph, &outcomes, "net", "net.json");
    assert_eq!(
        ht.get("summaries").expect("summaries present"),
        net.get("summaries").expect("summaries present"),
        "identical draws and identity adjustment must give identical summaries"
    );
}

#[test]
fn simulate_reports_are_bit_identical_modulo_timing() {
    let graph = write_temp("bern.json", BERNOULLI_GRAPH);
    let outcomes = write_temp("out-b.csv", OUTCOMES_CSV);
    let mut first = simulate_report(&graph, &outcomes, "net", "rep1.json");
    let mut second = simulate_report(&graph, &outcomes, "net", "rep2.json");
    assert_ne!(first.get("elapsed_seconds"), Some(&serde_json::Value::Null));
    first["elapsed_seconds"] = 0.0.into();
    second["elapsed_seconds"] = 0.0.into();
    assert_eq!(first, second);
}

#[test]
fn simulate_mean_tracks_true_effect() {
    let graph = write_temp("bern2.json", BERNOULLI_GRAPH);
    let outcomes = write_temp("out-c.csv", OUTCOMES_CSV);
    let report = simulate_report(&graph, &outcomes, "net", "rep3.json");
    let summaries = report["summaries"].as_array().expect("summary array");
    let value = |name: &str| -> f64 {
        summaries
            .iter()
            .find(|s| s["name"] == name)
            .unwrap_or_else(|| panic!("summary {name} present"))["value"]
            .as_f64()
            .expect("numeric")
    };
    let z = value("bias_z");
    assert!(z.abs() <= 4.0, "bias z-score {z} too large for an unbiased estimator");
    assert!((value("tau_true") - (-0.125)).abs() <= 1e-12);
}

#[test]
fn verify_network_suite_passes_and_prints_verdict_lines() {
    let output = bin().args(["verify", "--suite", "network"]).output().expect("binary runs");
    let text = stdout_of(&output);
    assert!(text.contains("[PASS]"));
    assert!(!text.contains("[FAIL]"));
    assert!(text.contains("checks passed"));
}

#[test]
fn verify_spectral_suite_writes_report() {
    let out = temp_path("verify.json");
    let output = bin()
        .args([
            "verify",
            "--suite",
            "spectral",
            "--n",
            "4",
            "--d",
            "1",
            "--phi",
            "0.5",
            "--replicates",
            "4000",
            "--seed",
            "1",
        ])
        .arg("--out")
        .arg(&out)
        .output()
        .expect("binary runs");
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).expect("report written"))
            .expect("valid json");
    let verdicts = report["verdicts"].as_array().expect("verdict array");
    assert_eq!(verdicts.len(), 3);
    assert!(verdicts.iter().all(|v| v["passed"].as_bool() == Some(true)));
}

#[test]
fn lp_solves_exports_and_reports() {
    let graph = write_temp("bern3.json", BERNOULLI_GRAPH);
    let export = temp_path("lp-export.txt");
    let out = temp_path("lp-report.json");
    let output = bin()
        .args(["lp"])
        .arg("--graph")
        .arg(&graph)
        .arg("--export")
        .arg(&export)
        .arg("--out")
        .arg(&out)
        .output()
        .expect("binary runs");
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = fs::read_to_string(&export).expect("export written");
    assert!(text.starts_with("\\ worst-case design LP"));
    assert!(text.contains("Minimize"));
    assert!(text.contains("End"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).expect("report written"))
            .expect("valid json");
    let summaries = report["summaries"].as_array().expect("summary array");
    let lp_value = summaries
        .iter()
        .find(|s| s["name"] == "lp_value")
        .expect("lp_value summary")["value"]
        .as_f64()
        .expect("numeric");
    assert!(lp_value > 0.0);
    let verdicts = report["verdicts"].as_array().expect("verdict array");
    assert!(verdicts.iter().any(|v| v["name"] == "lp-value-matches-direct-evaluation"));
    assert!(verdicts.iter().all(|v| v["passed"].as_bool() == Some(true)));
}

#[test]
fn lp_rejects_populations_above_the_cap() {
    let mut rows = Vec::new();
    for _ in 0..6 {
        rows.push(vec![0.0; 6]);
    }
    let graph = write_temp(
        "big.json",
        &format!(r#"{{"n":6,"kind":"deterministic","A":{}}}"#, serde_json::json!(rows)),
    );
    let output = bin().arg("lp").arg("--graph").arg(&graph).output().expect("binary runs");
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn imbalance_table_matches_direct_evaluation() {
    let out = stdout_of(
        &bin()
            .args(["imbalance", "--t", "0.6", "--n-from", "100", "--n-to", "200", "--step", "100"])
            .output()
            .expect("binary runs"),
    );
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("n,probability"));
    for (line, n) in lines.zip([100usize, 200]) {
        let mut parts = line.split(',');
        assert_eq!(parts.next(), Some(n.to_string().as_str()));
        let printed: f64 = parts.next().expect("probability column").parse().expect("float");
        let direct = rct_core::designs::imbalance_probability(n, 0.6).expect("valid arguments");
        assert!((printed - direct).abs() <= 1e-15);
    }
}
