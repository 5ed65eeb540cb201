use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cohmeas"))
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> PathBuf {
    scenarios_dir().join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn without_runtime(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("\"runtime_ms\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn zero_plus_report_values() {
    let o = run(&["run", scenario("zero_plus_n2.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["p_protocol"].as_f64(), Some(0.933012701892));
    assert!(v["gram_error"].as_f64().unwrap() <= 1e-10);
    assert!(v["decoupling_max"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
}

#[test]
fn every_shipped_scenario_is_deterministic() {
    let mut seen = 0;
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        seen += 1;
        let p = path.to_str().unwrap();
        let a = run(&["run", p]);
        let b = run(&["run", p]);
        assert!(a.status.success(), "{p}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(without_runtime(&stdout(&a)), without_runtime(&stdout(&b)), "{p}");
    }
    assert!(seen >= 4);
}

#[test]
fn malformed_priors_exit_two_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(scenario("zero_plus_n2.json"))
        .unwrap()
        .replace("[0.5, 0.5]", "[0.5, 0.4]");
    std::fs::write(&path, text).unwrap();
    let report = dir.path().join("out.json");
    let o = run(&["run", path.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("priors"));
    assert!(o.stdout.is_empty());
    assert!(!report.exists(), "schema errors never produce a report");
}

#[test]
fn guard_violation_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.json");
    let text = std::fs::read_to_string(scenario("zero_plus_n2.json"))
        .unwrap()
        .replace("\"copies\": 2", "\"copies\": 15");
    std::fs::write(&path, text).unwrap();
    let o = run(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    // compact mode has no dense guard, but the oracle does
    let o = run(&["run", path.to_str().unwrap(), "--mode", "compact"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn report_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = run(&[
        "run",
        scenario("memory_n4_d2.json").to_str().unwrap(),
        "--format",
        "csv",
        "--report",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), stdout(&o));
    let quiet = run(&[
        "run",
        scenario("memory_n4_d2.json").to_str().unwrap(),
        "--quiet",
    ]);
    assert!(quiet.status.success() && quiet.stdout.is_empty());
}

#[test]
fn validate_subcommand() {
    let o = run(&["validate", scenario("noon8_vs_up.json").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("valid"));
    let o = bin()
        .args(["validate", "-"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut c| {
            use std::io::Write;
            c.stdin.take().unwrap().write_all(br#"{"task": "ncopy", "states": [{"noon": 3}]}"#)?;
            c.wait_with_output()
        })
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("states[0]"));
}

#[test]
fn estimate_memory_table() {
    let o = run(&["estimate-memory", "--n-max", "6", "--d-max", "3", "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 18);
    assert!(text.lines().any(|l| l.starts_with("4,2,3,3,5,5,4,2,3,5")));
    assert!(text.lines().any(|l| l.starts_with("6,3,7,")));
    let o = run(&["estimate-memory", "--n-max", "4", "--d-max", "2"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let row = v.as_array().unwrap().iter().find(|r| r["n"] == 4 && r["d"] == 2).unwrap();
    assert_eq!(row["qubits_total"], 5);
}

#[test]
fn compare_enables_applicable_baselines() {
    let o = run(&["compare", scenario("unambiguous.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["p_joint_oracle"].is_number());
    assert!(v["p_local_baseline"].is_number());

    let o = run(&["compare", scenario("noon8_vs_up.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["p_joint_oracle"].is_number());
    assert!(v["p_local_baseline"].is_null());
}

#[test]
fn overrides_are_echoed() {
    let o = run(&[
        "run",
        scenario("trine.json").to_str().unwrap(),
        "--mode",
        "full",
        "--seed",
        "3",
        "--tol-cert",
        "1e-8",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["scenario"]["mode"], "full");
    assert_eq!(v["scenario"]["seed"], 3);
    assert_eq!(v["scenario"]["tolerances"]["certificate_tol"], 1e-8);
    let bad = run(&["run", scenario("trine.json").to_str().unwrap(), "--tol-rank", "-1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn multiple_specs_give_one_csv_row_each() {
    let o = run(&[
        "run",
        scenario("memory_n4_d2.json").to_str().unwrap(),
        scenario("zero_plus_n2.json").to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
}
