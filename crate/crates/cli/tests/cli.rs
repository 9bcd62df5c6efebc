use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qtpe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtpe"))
        .args(args)
        .env_remove("QTPE_DENSE_LIMIT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn sample(dir: &TempDir, name: &str, dim: usize, degree: usize, seed: u64) -> String {
    let out = p(dir, name);
    let o = qtpe(&[
        "sample",
        "--dim",
        &dim.to_string(),
        "--degree",
        &degree.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = p(dir, name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn sample_writes_requested_members() {
    let dir = TempDir::new().unwrap();
    let path = sample(&dir, "g.qtpe", 4, 4, 7);
    let e = qtpe_core::ensemble::load(Path::new(&path)).unwrap();
    assert_eq!(e.size(), 4);
    assert_eq!(e.dim(), 4);
    assert!(Path::new(&p(&dir, "g.json")).exists());
}

#[test]
fn sample_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = sample(&dir, "a.qtpe", 3, 6, 11);
    let b = sample(&dir, "b.qtpe", 3, 6, 11);
    let c = sample(&dir, "c.qtpe", 3, 6, 12);
    let read = |x: &str| std::fs::read(x).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn odd_degree_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = qtpe(&["sample", "--dim", "4", "--degree", "3", "--out", &p(&dir, "x.qtpe")]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("even"), "{err}");
}

#[test]
fn missing_flag_is_a_usage_error() {
    assert_eq!(code(&qtpe(&["sample", "--dim", "4"])), 2);
}

fn save_pauli(dir: &TempDir) -> String {
    let path = p(dir, "pauli.qtpe");
    qtpe_core::ensemble::save(&qtpe_core::ensemble::pauli_ensemble(), Path::new(&path)).unwrap();
    path
}

#[test]
fn lambda_of_pauli_and_identity() {
    let dir = TempDir::new().unwrap();
    let pauli = save_pauli(&dir);
    let o = qtpe(&["lambda", &pauli, "--t", "1"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert!(r["lambda"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["method"], "dense-svd");
    assert_eq!(r["ensemble-label"], "pauli");

    let id = p(&dir, "id.qtpe");
    let e = qtpe_core::UnitaryEnsemble::new(2, vec![qtpe_core::ComplexMatrix::identity(2)], None).unwrap();
    qtpe_core::ensemble::save(&e, Path::new(&id)).unwrap();
    let r = json(&qtpe(&["lambda", &id, "--t", "1"]));
    assert!((r["lambda"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn lambda_guard_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let pauli = save_pauli(&dir);
    let o = qtpe(&["lambda", &pauli, "--t", "9"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains('t'));
}

#[test]
fn lambda_non_convergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let g = sample(&dir, "g.qtpe", 3, 4, 1);
    let o = qtpe(&["lambda", &g, "--t", "2", "--method", "power", "--max-iters", "2", "--tol", "1e-14"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["converged"], false);
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&qtpe(&["lambda", &p(&dir, "nope.qtpe")])), 4);
}

#[test]
fn dense_limit_env_switches_method() {
    let dir = TempDir::new().unwrap();
    let pauli = save_pauli(&dir);
    let o = Command::new(env!("CARGO_BIN_EXE_qtpe"))
        .args(["lambda", &pauli, "--t", "1"])
        .env("QTPE_DENSE_LIMIT", "2")
        .output()
        .unwrap();
    assert_eq!(json(&o)["method"], "lanczos");
}

#[test]
fn csv_flattens_the_report() {
    let dir = TempDir::new().unwrap();
    let pauli = save_pauli(&dir);
    let o = qtpe(&["lambda", &pauli, "--csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("path,value\n"));
    assert!(text.contains("\nmethod,dense-svd\n"), "{text}");
}

#[test]
fn zigzag_product_and_bound() {
    let dir = TempDir::new().unwrap();
    let g = sample(&dir, "g.qtpe", 8, 4, 1);
    let h = sample(&dir, "h.qtpe", 4, 4, 2);
    let out = p(&dir, "z.qtpe");
    let o = qtpe(&["zigzag", "--g", &g, "--h", &h, "--out", &out, "--measure", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["members"], 16);
    assert_eq!(r["within_bound"], true);
    assert!(r["bound"]["value"].as_f64().is_some());
    assert_eq!(qtpe_core::ensemble::load(Path::new(&out)).unwrap().size(), 16);
}

#[test]
fn generalised_product_counts_words() {
    let dir = TempDir::new().unwrap();
    let g = sample(&dir, "g.qtpe", 2, 4, 1);
    let hs: Vec<String> = (0..2)
        .map(|i| {
            let out = p(&dir, &format!("h{i}.qtpe"));
            let o = qtpe(&[
                "sample", "--dim", "8", "--degree", "2", "--kind", "haar-set", "--seed", &i.to_string(), "--out", &out,
            ]);
            assert_eq!(code(&o), 0);
            out
        })
        .collect();
    let out = p(&dir, "z.qtpe");
    let o = qtpe(&[
        "zigzag", "--kind", "generalised", "--g", &g, "--h", &hs[0], "--h", &hs[1], "--k", "2", "--dprime", "2",
        "--out", &out, "--lambda1", "0.5", "--lambda2", "0.5",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["members"], 4);
    assert_eq!(r["bound"]["dprime_feasible"], false);
}

#[test]
fn zigzag_mismatch_names_both_values() {
    let dir = TempDir::new().unwrap();
    let g = sample(&dir, "g.qtpe", 8, 4, 1);
    let h = sample(&dir, "h.qtpe", 5, 4, 2);
    let o = qtpe(&["zigzag", "--g", &g, "--h", &h, "--out", &p(&dir, "z.qtpe")]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains('4') && err.contains('5'), "{err}");
}

#[test]
fn certify_small_zigzag_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"schema_version": 1, "seed": 4, "steps": [
            {"kind": "zigzag", "t": 1,
             "g": {"type": "random", "dim": 4, "degree": 4},
             "h": {"type": "random", "dim": 4, "degree": 4}},
            {"kind": "closeness", "outer_dim": 1, "inner_dim": 4, "t": 2},
            {"kind": "design-error", "ensemble": {"type": "pauli"}, "t": 1, "k": [1, 2]}]}"#,
    );
    let o = qtpe(&["certify", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["pass"], true);
    assert_eq!(r["steps"][0]["report"]["members"], 16);
    assert_eq!(r["steps"][0]["flags"][0], "vacuous");
    let again = qtpe(&["certify", &cfg]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn certify_failing_check_exits_nonzero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"schema_version": 1, "steps": [
            {"kind": "lambda", "ensemble": {"type": "haar-set", "dim": 2, "degree": 1}, "t": [1], "max_lambda": 0.5}]}"#,
    );
    let o = qtpe(&["certify", &cfg]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["steps"][0]["pass"], false);
}

#[test]
fn malformed_config_reports_field_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"schema_version": 1, "steps": [{"kind": "closeness", "outer_dim": 2, "inner_dim": "four", "t": 2}]}"#,
    );
    let o = qtpe(&["certify", &cfg]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("steps[0].inner_dim"), "{err}");
}

#[test]
fn calibrate_epsgood_reports_rate() {
    let o = qtpe(&["calibrate-epsgood", "--d", "2", "--dprime", "16", "--eps", "0.3", "--trials", "3", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["trials"], 3);
    assert!(r["rate"].as_f64().unwrap() <= 1.0);
}
