use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lrsd_cli::matfile;

fn lrsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrsd"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(path: &Path, text: &str) -> PathBuf {
    fs::write(path, text).unwrap();
    path.to_owned()
}

const SMALL_SPEC: &str = r#"{ "n": 12, "k": 15, "i": 10, "rho_true": 2, "r": 0.3, "seed": 5 }"#;

fn config(instance: &str, algorithms: &str, emit: &str) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "instance": {instance},
  "algorithms": [{algorithms}],
  "output_dir": "out",
  "emit": {emit},
  "timing": false
}}"#
    )
}

const THREE: &str = r#"
    { "algorithm": "pbr", "delta": 1e-9, "max_iters": 60 },
    { "algorithm": "bcd", "max_iters": 20 },
    { "algorithm": "admm", "c": 100.0, "max_iters": 40 }"#;

#[test]
fn zero_k_is_a_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(&dir.path().join("spec.json"), r#"{ "k": 0 }"#);
    let out = lrsd(&["generate", spec.to_str().unwrap(), "-o", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`k`"), "{}", stderr(&out));
    assert!(!dir.path().join("b").exists());
}

#[test]
fn unknown_spec_field_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(&dir.path().join("spec.json"), r#"{ "kk": 3 }"#);
    let out = lrsd(&["generate", spec.to_str().unwrap(), "-o", "unused"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("kk"));
}

#[test]
fn missing_spec_file_fails() {
    let out = lrsd(&["generate", "/nonexistent/spec.json", "-o", "unused"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn same_seed_gives_identical_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(&dir.path().join("spec.json"), SMALL_SPEC);
    for b in ["a", "b"] {
        let out = lrsd(&["generate", spec.to_str().unwrap(), "-o", dir.path().join(b).to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let files = ["Y.mat", "D.mat", "truth_P.mat", "truth_Q.mat", "truth_S.mat", "meta.json"];
    for f in files {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let y = matfile::read(&dir.path().join("a/Y.mat")).unwrap();
    assert_eq!(y.dim(), (12, 15));
    assert_eq!(matfile::read(&dir.path().join("a/truth_S.mat")).unwrap().dim(), (10, 15));
}

#[test]
fn default_spec_gives_106_by_380() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(&dir.path().join("spec.json"), r#"{ "seed": 1 }"#);
    let out = lrsd(&["generate", spec.to_str().unwrap(), "-o", dir.path().join("b").to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(matfile::read(&dir.path().join("b/Y.mat")).unwrap().dim(), (106, 380));
    assert_eq!(matfile::read(&dir.path().join("b/D.mat")).unwrap().dim(), (106, 380));
}

#[test]
fn solve_writes_one_csv_per_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(&dir.path().join("spec.json"), SMALL_SPEC);
    assert!(lrsd(&["generate", spec.to_str().unwrap(), "-o", dir.path().join("bundle").to_str().unwrap()]).status.success());
    let cfg = write(
        &dir.path().join("cfg.json"),
        &config(r#"{ "path": "bundle" }"#, THREE, r#"["csv"]"#),
    );
    let out = lrsd(&["solve", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let od = dir.path().join("out");
    for name in ["pbr", "bcd", "admm"] {
        let text = fs::read_to_string(od.join(format!("{name}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,objective,rel_error,stationarity,gamma,elapsed_seconds");
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r[2] >= 0.0 && r[5] == 0.0));
        if name == "pbr" {
            assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1] + 1e-12 * w[0][1]));
        }
        assert_eq!(matfile::read(&od.join(format!("{name}_S.mat"))).unwrap().dim(), (10, 15));
    }
    assert!(!od.join("compare.csv").exists());
    assert!(!od.join("rel_error_vs_iteration.svg").exists());
    let meta = fs::read_to_string(dir.path().join("bundle/meta.json")).unwrap();
    assert!(meta.contains("pbr-exact"), "reference value is cached");
}

#[test]
fn zero_budget_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("cfg.json"),
        &config(
            &format!(r#"{{ "generate": {SMALL_SPEC} }}"#),
            r#"{ "algorithm": "pbr", "delta": 1e-9, "max_iters": 0 }"#,
            r#"["csv"]"#,
        ),
    );
    let out = lrsd(&["solve", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("out/pbr.csv")).unwrap();
    assert_eq!(text, "iter,objective,rel_error,stationarity,gamma,elapsed_seconds\n");
}

#[test]
fn compare_needs_two_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("cfg.json"),
        &config(
            &format!(r#"{{ "generate": {SMALL_SPEC} }}"#),
            r#"{ "algorithm": "pbr", "delta": 1e-9, "max_iters": 10 }"#,
            r#"["csv", "svg"]"#,
        ),
    );
    let out = lrsd(&["compare", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("algorithms"));
}

#[test]
fn compare_honours_emit() {
    let dir = tempfile::tempdir().unwrap();
    let inst = format!(r#"{{ "generate": {SMALL_SPEC} }}"#);
    let cfg = write(&dir.path().join("csv.json"), &config(&inst, THREE, r#"["csv"]"#));
    let out = lrsd(&["compare", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let od = dir.path().join("out");
    assert!(od.join("compare.csv").exists());
    let svgs: Vec<_> = fs::read_dir(&od)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "svg"))
        .collect();
    assert!(svgs.is_empty());

    let cfg = write(&dir.path().join("both.json"), &config(&inst, THREE, r#"["csv", "svg"]"#));
    let out = lrsd(&["compare", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["rel_error_vs_iteration.svg", "rel_error_vs_time.svg"] {
        let svg = fs::read_to_string(od.join(f)).unwrap();
        assert!(svg.contains("<polyline") && svg.contains("F*"));
    }
    let combined = fs::read_to_string(od.join("compare.csv")).unwrap();
    assert!(combined.starts_with("algorithm,iter,"));
    for name in ["pbr", "bcd", "admm"] {
        assert!(combined.lines().any(|l| l.starts_with(&format!("{name},"))));
    }
}

#[test]
fn distributed_run_writes_a_replay_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("cfg.json"),
        &config(
            &format!(r#"{{ "generate": {SMALL_SPEC} }}"#),
            r#"{ "algorithm": "pbr", "delta": 1e-9, "max_iters": 15 },
               { "algorithm": "pbr-distributed", "nodes": 3, "delta": 1e-9, "max_iters": 15, "replay_log": true }"#,
            r#"["csv"]"#,
        ),
    );
    let out = lrsd(&["solve", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let od = dir.path().join("out");
    let log = fs::read(od.join("pbr-distributed.msglog")).unwrap();
    let mut pos = 0;
    let mut count = 0;
    while pos < log.len() {
        let len = u64::from_le_bytes(log[pos..pos + 8].try_into().unwrap()) as usize;
        lrsd_core::distributed::Message::<f64>::decode(&log[pos + 8..pos + 8 + len]).unwrap();
        pos += 8 + len;
        count += 1;
    }
    assert_eq!(pos, log.len());
    assert!(count > 0);
    let a = fs::read_to_string(od.join("pbr.csv")).unwrap();
    let b = fs::read_to_string(od.join("pbr-distributed.csv")).unwrap();
    assert_eq!(a.lines().count(), b.lines().count());
}

#[test]
fn bundle_shape_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(&dir.path().join("spec.json"), SMALL_SPEC);
    assert!(lrsd(&["generate", spec.to_str().unwrap(), "-o", dir.path().join("bundle").to_str().unwrap()]).status.success());
    matfile::write(&dir.path().join("bundle/D.mat"), &ndarray::Array2::ones((12, 3))).unwrap();
    let cfg = write(
        &dir.path().join("cfg.json"),
        &config(r#"{ "path": "bundle" }"#, THREE, r#"["csv"]"#),
    );
    let out = lrsd(&["solve", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("D is"));
}
