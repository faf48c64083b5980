//! End-to-end CLI checks: subcommands, artifacts, exit codes.

use std::path::Path;
use std::process::Command;

fn ce() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ce"))
}

fn small_config(dir: &Path, g2: f64) -> std::path::PathBuf {
    let text = format!(
        r#"
name = "cli-test"
seed = 7

[grid]
n = 24

[initial]
s0 = "0"

[hamiltonian]
type = "hybrid-bilinear"
g1 = 1.0
g2 = {g2}

[time]
t = 0.8
n_steps = 8

[measure]
a_values = [0.0, 0.3]
t_values = [0.4, 0.8]

[observables]
f = ["x*k + 0.5*k^2", "x^2"]
m = ["q1*p1_sym", "q1"]
"#
    );
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn sweep_writes_the_documented_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1.0);
    let out = dir.path().join("out");
    let status = ce()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "g1,g2,t,a,mode,entropy,schmidt_rank");
    assert_eq!(lines.count(), 4); // 2 times x 2 measurement values
}

#[test]
fn zero_coupling_sweep_has_zero_entropy_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 0.0);
    let out = dir.path().join("out");
    assert!(ce()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let entropy: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!(entropy < 1e-9, "entropy {entropy} in {line}");
    }
}

#[test]
fn qubit_protocol_reports_final_negativity_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = ce()
        .args(["qubit-protocol", "--communicate", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("protocol.csv")).unwrap();
    assert!(
        csv.contains("final_negativity,5.00000000000e-1"),
        "protocol.csv:\n{csv}"
    );
    // transcript parses and carries no joint operations
    let transcript = std::fs::read_to_string(out.join("transcript.json")).unwrap();
    assert!(transcript.contains("ClassicalCommunication"));
    assert!(!transcript.contains("JointUnitary"));
}

#[test]
fn evolve_writes_a_readable_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1.0);
    let out = dir.path().join("out");
    assert!(ce()
        .args(["evolve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let (e, meta) = ce_core::snapshot::read_snapshot(&out.join("ensemble.ce")).unwrap();
    assert_eq!(meta.scenario, "cli-test");
    assert_eq!(meta.time, 0.8);
    assert!((e.norm() - 1.0).abs() < 1e-8);
    // effective config re-parses to the same scenario
    let text = std::fs::read_to_string(out.join("effective-config.toml")).unwrap();
    let cfg_back = ce_core::scenario::ScenarioConfig::parse(&text).unwrap();
    assert_eq!(cfg_back.name, "cli-test");
}

#[test]
fn brackets_and_locality_exit_clean_on_the_small_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1.0);
    for sub in ["brackets", "locality"] {
        let out = dir.path().join(format!("out-{sub}"));
        let status = ce()
            .args([sub, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "{sub} failed");
    }
    let loc: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out-locality").join("locality.json")).unwrap(),
    )
    .unwrap();
    assert!(loc["remote_invariance"].as_array().unwrap().len() >= 5);

    // user-supplied observable expressions land in the bracket reports
    let br = std::fs::read_to_string(dir.path().join("out-brackets").join("brackets.json"))
        .unwrap();
    assert!(br.contains("x*k"), "user f expressions missing:\n{br}");
    assert!(br.contains("q1*p1_sym"), "user m expressions missing");
}

#[test]
fn condition_reports_dual_entropies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1.0);
    let out = dir.path().join("out");
    assert!(ce()
        .args(["condition", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let reports: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("conditional.json")).unwrap(),
    )
    .unwrap();
    let first = &reports.as_array().unwrap()[0];
    assert!(first["entropy_svd"].as_f64().unwrap() >= 0.0);
    assert!(first["entropy_gaussian"].as_f64().is_some());
    assert!(out.join("schmidt.csv").exists());
}

#[test]
fn gravity_demo_writes_the_documented_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(ce()
        .args(["gravity-demo", "--lambda", "0.1", "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(out.join("demo.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,lambda,observable,party,value");
    assert!(csv.lines().count() > 8);
}

#[test]
fn failed_checks_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
name = "impossible"
seed = 7

[grid]
n = 24

[initial]

[hamiltonian]
type = "hybrid-bilinear"
g1 = 1.0
g2 = 1.0

[tolerances]
entropy_agreement = 0.0001
split_step_l2 = 0.001
bracket_isomorphism = 1e-30
canonical_bracket = 1e-30
remote_drift = 0.00000001
direct_bracket = 0.000001
strong_separability = 0.001
rate_law = 0.001
classical_analog = 0.000000000001
qubit_matrix = 0.000000000001
negativity = 0.0000000001
demo_deviation = 0.000001
"#;
    let cfg = dir.path().join("impossible.toml");
    std::fs::write(&cfg, text).unwrap();
    let status = ce()
        .args(["brackets", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nyolo = true\n").unwrap();
    let status = ce()
        .args(["sweep", "--config"])
        .arg(&bad)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
