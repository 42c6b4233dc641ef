use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use awp_core::awpt::{read_mask, read_matrix, write_matrix};
use awp_core::prelude::*;
use serde_json::Value;
use tempfile::TempDir;

fn awp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_awp")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Writes a seeded synthetic layer and returns (weights, acts).
fn synth(dir: &Path, d_out: usize, d_in: usize, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let out = dir.join("data");
    let o = awp(&[
        "synth", "--d-out", &d_out.to_string(), "--d-in", &d_in.to_string(), "--n", &n.to_string(),
        "--seed", &seed.to_string(), "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (out.join("weights.awpt"), out.join("acts.awpt"))
}

#[test]
fn prune_defaults_are_echoed() {
    let dir = TempDir::new().unwrap();
    let (w, x) = synth(dir.path(), 8, 32, 128, 1);
    let out = dir.path().join("run");
    let o = awp(&["compress", "--mode", "prune", "--ratio", "0.5", "--weights", s(&w), "--acts", s(&x), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("result.json"));
    assert_eq!(r["config"]["eta_rule"], "2/||C||_F");
    assert_eq!(r["config"]["tol"], 1e-4);
    assert_eq!(r["config"]["max_iters"], 200);
    assert_eq!(r["config"]["init"], "wanda");
    assert!(r["final_normalized_loss"].as_f64().unwrap() <= r["initial_normalized_loss"].as_f64().unwrap());
    assert_eq!(r["feasible"], true);

    let theta: Matrix = read_matrix(out.join("theta.awpt")).unwrap();
    let mask = read_mask(out.join("mask.awpt")).unwrap();
    assert!(mask.has_row_count(16) && mask.covers_support(&theta));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,normalized_loss,grad_norm,ratio\n"));
    assert_eq!(trace.lines().count() - 2, r["iterations"].as_u64().unwrap() as usize);
}

#[test]
fn quantize_defaults_are_echoed() {
    let dir = TempDir::new().unwrap();
    let (w, x) = synth(dir.path(), 8, 32, 128, 2);
    let out = dir.path().join("run");
    let o = awp(&["compress", "--mode", "quantize", "--bits", "4", "--group", "128", "--weights", s(&w), "--acts", s(&x), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("result.json"));
    assert_eq!(r["config"]["max_iters"], 10);
    assert_eq!(r["iterations"], 10);
    assert_eq!(r["config"]["init"], "rtn");
    assert_eq!(r["config"]["eta_rule"], "1.5/||C||_F");
    let grid = json(&out.join("grid.json"));
    assert_eq!(grid["bits"], 4);
    assert_eq!(grid["scales"].as_array().unwrap().len(), 8);
}

#[test]
fn unconstrained_prune_is_lossless() {
    let dir = TempDir::new().unwrap();
    let (w, x) = synth(dir.path(), 4, 12, 40, 3);
    let out = dir.path().join("run");
    let o = awp(&["compress", "--mode", "prune", "--keep", "12", "--weights", s(&w), "--acts", s(&x), "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(json(&out.join("result.json"))["final_normalized_loss"], 0.0);
}

#[test]
fn covariance_input_matches_activations() {
    let dir = TempDir::new().unwrap();
    let (w, x) = synth(dir.path(), 6, 16, 64, 4);
    let acts: Matrix = read_matrix(&x).unwrap();
    let cov_path = dir.path().join("cov.awpt");
    write_matrix(&cov_path, Cov::from_activations(&acts, true).unwrap().matrix()).unwrap();
    let mut losses = Vec::new();
    for (flag, path) in [("--acts", &x), ("--cov", &cov_path)] {
        let out = dir.path().join(flag.trim_start_matches('-'));
        let o = awp(&["compress", "--mode", "joint", "--ratio", "0.5", "--group", "8", "--weights", s(&w), flag, s(path), "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let r = json(&out.join("result.json"));
        assert_eq!(r["feasible"], true);
        losses.push(r["final_normalized_loss"].as_f64().unwrap());
    }
    assert!((losses[0] - losses[1]).abs() < 1e-9, "{losses:?}");
}

#[test]
fn single_precision_outputs() {
    let dir = TempDir::new().unwrap();
    let (w, x) = synth(dir.path(), 4, 16, 64, 5);
    let out = dir.path().join("run");
    let o = awp(&["compress", "--mode", "prune", "--ratio", "0.25", "--precision", "f32", "--weights", s(&w), "--acts", s(&x), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = awp_core::awpt::read_header(out.join("theta.awpt")).unwrap();
    assert_eq!(header.dtype, awp_core::awpt::DTYPE_F32);
}

#[test]
fn baselines_write_feasible_results() {
    let dir = TempDir::new().unwrap();
    let (w, x) = synth(dir.path(), 8, 32, 128, 6);
    for method in ["magnitude", "wanda", "rtn", "awq-lite", "wanda-awq", "awq-wanda"] {
        let out = dir.path().join(method);
        let o = awp(&["baseline", "--method", method, "--ratio", "0.5", "--group", "16", "--weights", s(&w), "--acts", s(&x), "--out", s(&out)]);
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        let r = json(&out.join("result.json"));
        assert_eq!(r["feasible"], true, "{method}");
        assert_eq!(r["stop_reason"], "one_shot");
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let (w, x) = synth(dir.path(), 4, 8, 32, 7);
    let out = dir.path().join("run");
    let code = |args: &[&str]| awp(args).status.code().unwrap();

    let missing = dir.path().join("missing.awpt");
    assert_eq!(code(&["compress", "--mode", "prune", "--ratio", "0.5", "--weights", s(&missing), "--acts", s(&x), "--out", s(&out)]), 2);
    assert_eq!(code(&["compress", "--mode", "prune", "--weights", s(&w), "--acts", s(&x), "--out", s(&out)]), 2);
    assert_eq!(code(&["compress", "--mode", "prune", "--ratio", "0.5", "--weights", s(&w), "--acts", s(&x), "--cov", s(&x), "--out", s(&out)]), 2);
    assert_eq!(code(&["compress", "--mode", "prune", "--ratio", "0.5", "--eta-rule", "bogus", "--weights", s(&w), "--acts", s(&x), "--out", s(&out)]), 2);
    // weights used as activations: 8 channels against 32 samples
    assert_eq!(code(&["compress", "--mode", "prune", "--ratio", "0.5", "--weights", s(&x), "--acts", s(&x), "--out", s(&out)]), 2);
    let garbage = dir.path().join("garbage.awpt");
    std::fs::write(&garbage, b"AWPX\x01\x00\x00\x00").unwrap();
    assert_eq!(code(&["compress", "--mode", "prune", "--ratio", "0.5", "--weights", s(&garbage), "--acts", s(&x), "--out", s(&out)]), 2);
    assert_eq!(code(&["compress", "--mode", "prune", "--ratio", "0.5", "--eta-rule", "explicit:1e9", "--weights", s(&w), "--acts", s(&x), "--out", s(&out)]), 3);
    assert_eq!(code(&["compress", "--mode", "prune", "--ratio", "0.5", "--weights", s(&w), "--acts", s(&x), "--out", s(&out)]), 0);
}

#[test]
fn oracle_compare_identity_and_guard() {
    let dir = TempDir::new().unwrap();
    let w = Matrix::from_fn(5, 8, |i, j| ((i * 8 + j) as f64 * 0.9).sin());
    let w_path = dir.path().join("w.awpt");
    let eye = dir.path().join("eye.awpt");
    write_matrix(&w_path, &w).unwrap();
    write_matrix(&eye, &Matrix::identity(8)).unwrap();
    let out = dir.path().join("cmp.json");
    let o = awp(&["oracle-compare", "--keep", "3", "--weights", s(&w_path), "--cov", s(&eye), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(&out);
    for row in c["rows"].as_array().unwrap() {
        assert!((row["awp_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
    let o = awp(&["oracle-compare", "--keep", "8", "--weights", s(&w_path), "--cov", s(&eye), "--out", s(&out)]);
    assert!(o.status.success());
    for row in json(&out)["rows"].as_array().unwrap() {
        for key in ["oracle", "awp", "wanda", "magnitude"] {
            assert_eq!(row[key], 0.0);
        }
    }

    let (w_big, x_big) = synth(dir.path(), 8, 10, 80, 8);
    let o = awp(&["oracle-compare", "--keep", "3", "--weights", s(&w_big), "--acts", s(&x_big), "--out", s(&out)]);
    assert!(o.status.success());
    for row in json(&out)["rows"].as_array().unwrap() {
        for key in ["awp_ratio", "wanda_ratio", "magnitude_ratio"] {
            assert!(row[key].as_f64().unwrap() >= 1.0 - 1e-10, "{row}");
        }
    }

    let wide = dir.path().join("wide.awpt");
    write_matrix(&wide, &Matrix::from_fn(2, 20, |i, j| (i + j) as f64)).unwrap();
    let eye20 = dir.path().join("eye20.awpt");
    write_matrix(&eye20, &Matrix::identity(20)).unwrap();
    let o = awp(&["oracle-compare", "--keep", "3", "--weights", s(&wide), "--cov", s(&eye20), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let suite = dir.path().join("suite.json");
    std::fs::write(&suite, r#"[{"d": 32, "k": 4, "n": 2048, "noise_level": 0, "trials": 3},
                              {"kind": "oracle", "trials": 2}]"#).unwrap();
    let mut bytes = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let o = awp(&["bench", "--suite", s(&suite), "--seed", "42", "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        bytes.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let report: Value = serde_json::from_slice(&bytes[0]).unwrap();
    assert!(report[0]["support_recovery_rate"].is_number());
    assert_eq!(report[0]["suite"]["seed0"], 42);
    assert_eq!(report[1]["kind"], "oracle");

    std::fs::write(&suite, "[]").unwrap();
    let out = dir.path().join("empty.json");
    assert!(awp(&["bench", "--suite", s(&suite), "--out", s(&out)]).status.success());
    assert_eq!(json(&out), serde_json::json!([]));

    std::fs::write(&suite, "{not json").unwrap();
    assert_eq!(awp(&["bench", "--suite", s(&suite), "--out", s(&out)]).status.code(), Some(2));
}
