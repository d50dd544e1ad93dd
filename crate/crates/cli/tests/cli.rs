use std::path::Path;
use std::process::{Command, Output};

fn pdrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdrank")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn simulate(dir: &Path, items: &str, trials: &str, extra: &[&str]) -> String {
    let path = dir.join(format!("data{items}.csv"));
    let p = path.to_str().unwrap();
    let mut args = vec![
        "simulate",
        "--out",
        p,
        "--items",
        items,
        "--seed",
        "3",
        "--standard-trials",
        trials,
    ];
    args.extend_from_slice(extra);
    let out = pdrank(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    p.to_string()
}

#[test]
fn simulate_writes_data_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "8", "4", &["--delta", "0.0"]);
    let csv = std::fs::read_to_string(&data).unwrap();
    assert!(csv.starts_with("item_i,item_j,label,count"));
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("data8.json")).unwrap()).unwrap();
    assert_eq!(truth["true_ranking"].as_array().unwrap().len(), 8);
    assert_eq!(truth["config"]["model"], "toggle");
    assert_eq!(truth["num_observations"], 4 * 28);
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = simulate(a.path(), "8", "4", &[]);
    let pb = simulate(b.path(), "8", "4", &[]);
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn rank_recovers_noiseless_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "8", "10", &["--delta", "0.0"]);
    let out = pdrank(&["rank", "--input", &data]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("data8.json")).unwrap()).unwrap();
    assert_eq!(summary["ranking"], truth["true_ranking"]);
    assert_eq!(summary["method"], "pdrank");
}

#[test]
fn rank_writes_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "8", "4", &[]);
    let out_dir = dir.path().join("out");
    let out = pdrank(&[
        "rank",
        "--input",
        &data,
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--weight-trace",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["scores.csv", "result.json", "confidence.csv", "weights.csv"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let scores = std::fs::read_to_string(out_dir.join("scores.csv")).unwrap();
    assert!(scores.starts_with("item,score,rank\n"));
    assert_eq!(scores.lines().count(), 9);
}

#[test]
fn rank_with_baseline_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "8", "4", &[]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"method": "bt", "bt_tol": 1e-10}"#).unwrap();
    let out = pdrank(&["rank", "--input", &data, "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["method"], "bt");
    // command-line flags win over the file
    let out = pdrank(&[
        "rank",
        "--input",
        &data,
        "--config",
        cfg.to_str().unwrap(),
        "--method",
        "borda",
    ]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["method"], "borda");
}

#[test]
fn bench_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{
  "generator": {"model": "toggle", "num_items": 8, "delta": 0.1, "standard_trials": 2.0},
  "methods": ["pdrank", "borda", "bt"],
  "trials": 3,
  "sweep": {"axis": "standard_trials", "values": [1.0, 2.0]}
}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("bench");
    let out = pdrank(&[
        "bench",
        "--config",
        spec.to_str().unwrap(),
        "--seed",
        "5",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--name",
        "sweep",
        "--threads",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 3);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["spec"]["seed"], 5);
    assert_eq!(json["schema_version"], 1);
}

#[test]
fn bench_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, "{}").unwrap();
    let out = pdrank(&["bench", "--config", spec.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn oracle_reports_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "6", "4", &[]);
    let out = pdrank(&["oracle", "--input", &data]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let methods = report["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 3);
    let optimum = report["optimal_cost"].as_u64().unwrap();
    for m in methods {
        assert_eq!(
            m["zero_one_cost"].as_u64().unwrap() - optimum,
            m["gap"].as_u64().unwrap()
        );
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // usage: unknown flag, bad parameter value
    assert_eq!(code(&pdrank(&["rank", "--bogus"])), 1);
    let data = simulate(dir.path(), "8", "4", &[]);
    assert_eq!(code(&pdrank(&["rank", "--input", &data, "--lambda", "3"])), 1);

    // data: tie label, missing file, too many items for the oracle
    let ties = dir.path().join("ties.csv");
    std::fs::write(&ties, "item_i,item_j,label\na,b,1\nb,c,0\n").unwrap();
    let out = pdrank(&["rank", "--input", ties.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
    assert_eq!(code(&pdrank(&["rank", "--input", "/nonexistent/data.csv"])), 2);
    let big = simulate(dir.path(), "9", "1", &[]);
    assert_eq!(code(&pdrank(&["oracle", "--input", &big])), 2);
}

#[test]
fn named_items_survive() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("named.csv");
    std::fs::write(
        &data,
        "item_i,item_j,label,count\r\nalpha,beta,1,3\r\nbeta,gamma,1,3\r\nalpha,gamma,1,2\r\n",
    )
    .unwrap();
    let out = pdrank(&["rank", "--input", data.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["ranking"], serde_json::json!(["alpha", "beta", "gamma"]));
}
