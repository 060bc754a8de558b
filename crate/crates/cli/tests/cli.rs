use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparsemix"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn short_poisson(dir: &Path) -> PathBuf {
    let data = configs().join("data/counts.csv");
    write_config(
        dir,
        &format!(
            r#"{{
  "data": {{ "format": "counts", "path": "{}" }},
  "kernel": {{ "type": "poisson", "fixed_b0": true }},
  "model": {{ "family": "sfm", "k": 5, "prior": {{ "type": "gamma", "shape": 1.0, "rate": 100.0 }} }},
  "iterations": {{ "burnin": 300, "keep": 300 }},
  "seed": 4
}}"#,
            data.display()
        ),
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn fit_fear_sfm_has_mode_two() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("fear_sfm.json");
    let o = run(&["fit", "--config", s(&cfg), "--out", s(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let kplus = read_json(&out.path().join("kplus.json"));
    assert_eq!(kplus["mode"], 2);
    let id = read_json(&out.path().join("identified.json"));
    assert_eq!(id["khat"], 2);
    assert_eq!(id["classes"].as_array().unwrap().len(), 2);
    assert_eq!(id["final_partition"].as_array().unwrap().len(), 93);
    let trace = csv_rows(&out.path().join("trace.csv"));
    assert_eq!(trace.len(), 8000);
}

#[test]
fn fit_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_poisson(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["fit", "--config", s(&cfg), "--out", s(out), "--seed", "1", "--chains", "2", "--workers", "2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trace.csv", "params.csv", "allocations.csv", "kplus.json", "identified.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(csv_rows(&a.join("trace.csv")).len(), 600);
}

#[test]
fn seed_flag_changes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_poisson(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["fit", "--config", s(&cfg), "--out", s(&a), "--seed", "1"]).status.success());
    assert!(run(&["fit", "--config", s(&cfg), "--out", s(&b), "--seed", "2"]).status.success());
    assert_ne!(fs::read(a.join("trace.csv")).unwrap(), fs::read(b.join("trace.csv")).unwrap());
}

#[test]
fn identify_reproduces_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_poisson(dir.path());
    let fit = dir.path().join("fit");
    assert!(run(&["fit", "--config", s(&cfg), "--out", s(&fit)]).status.success());
    let again = dir.path().join("again");
    let o = run(&["identify", "--config", s(&cfg), "--run", s(&fit), "--out", s(&again)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        read_json(&fit.join("identified.json")),
        read_json(&again.join("identified.json"))
    );
}

#[test]
fn missing_data_file_exits_with_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_poisson(dir.path());
    let missing = dir.path().join("nope.csv");
    let o = run(&["fit", "--config", s(&cfg), "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}

#[test]
fn malformed_config_exits_with_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "data": { "format": "builtin", "name": "fear" } }"#);
    assert_eq!(run(&["fit", "--config", s(&cfg)]).status.code(), Some(2));
    let cfg = write_config(
        dir.path(),
        r#"{ "data": { "format": "builtin", "name": "fear" }, "kernel": { "type": "latent_class" },
             "model": { "family": "sfm", "prior": { "type": "gamma", "shape": 1, "rate": 200 } } }"#,
    );
    let o = run(&["fit", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.k"));
    let o = run(&["fit", "--config", s(&dir.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evidence_table_for_fear_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "data": { "format": "builtin", "name": "fear" }, "kernel": { "type": "latent_class" },
             "model": { "family": "sfm", "k": 3, "prior": { "type": "fixed", "value": 4.0 } },
             "evidence": { "k_min": 1, "k_max": 3, "method": "enumeration" } }"#,
    );
    let o = run(&["evidence", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("evidence.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], "analytic");
    let k1: f64 = rows[0][2].parse().unwrap();
    assert!((k1 + 333.01).abs() < 0.02, "{k1}");
    // 2^93 allocations exceed the enumeration guard
    assert_eq!(rows[1][1], "unsupported");
    assert_eq!(rows[2][1], "unsupported");
}

#[test]
fn evidence_rejects_nonconjugate_kernel() {
    let cfg = configs().join("glm_negbin.json");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["evidence", "--config", s(&cfg), "--out", s(dir.path())]).status.code(), Some(2));
}

fn prior_pmf(k: &str, e0: &str, n: &str, dir: &Path) -> Vec<f64> {
    let o = run(&["prior-kplus", "--k", k, "--e0", e0, "--n", n, "--draws", "100000", "--out", s(dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    csv_rows(&dir.join("prior_kplus.csv")).iter().map(|r| r[1].parse().unwrap()).collect()
}

fn argmax(p: &[f64]) -> usize {
    (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap() + 1
}

#[test]
fn prior_kplus_pmfs() {
    let dir = tempfile::tempdir().unwrap();
    let sparse = prior_pmf("10", "0.005", "100", dir.path());
    assert_eq!(argmax(&sparse), 1);
    let dense = prior_pmf("10", "4", "100", dir.path());
    assert!(dense[9] > 0.9, "{dense:?}");
    let single = prior_pmf("1", "0.3", "50", dir.path());
    assert_eq!(single, vec![1.0]);
    let o = run(&["prior-kplus", "--k", "3", "--e0", "1", "--n", "5", "--draws", "0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
