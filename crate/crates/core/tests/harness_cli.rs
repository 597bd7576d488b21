mod common;

use std::path::Path;
use std::process::Command;

use cocycle_lab::harness::{run, run_plan, ExperimentConfig, Plan, ResultBundle, Stage};
use proptest::prelude::*;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cocycle-lab"));
    c.env("SOURCE_DATE_EPOCH", "0").env_remove("RUST_LOG");
    c
}

fn config(name: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&common::fixture(name)).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

#[test]
fn validate_exit_codes() {
    let st = bin().args(["validate"]).arg(common::fixture("diag_pair.json")).status().unwrap();
    assert_eq!(st.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(common::fixture("diag_pair.json")).unwrap();
    std::fs::write(&bad, text.replace("\"eps\": 0.1", "\"eps\": -0.1")).unwrap();
    assert_eq!(bin().arg("validate").arg(&bad).status().unwrap().code(), Some(1));
    assert_eq!(bin().arg("run").arg(&bad).status().unwrap().code(), Some(1));
    assert_eq!(bin().arg("validate").arg(dir.path().join("missing.json")).status().unwrap().code(), Some(1));
    assert_eq!(bin().arg("frobnicate").status().unwrap().code(), Some(1));
    assert_eq!(bin().status().unwrap().code(), Some(1));
}

#[test]
fn constant_config_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let b = run(&config("constant.json", dir.path())).unwrap();
    let e = b.exponents.unwrap();
    assert!((e.lambda_hat.value - 3f64.ln()).abs() < 1e-12);
    assert!((e.chi_hat.value - 0.5f64.ln()).abs() < 1e-12);
    let t = b.theorem_report.unwrap();
    assert!(t.residual < 1e-12 && t.success);
    for f in ["exponents.csv", "exponents.json", "periodic_scores.csv", "norm_checks.json", "jsr.json", "bundle.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn estimate_alone_skips_later_stages() {
    let dir = tempfile::tempdir().unwrap();
    let b = run_plan(&config("golden_pair.json", dir.path()), Plan::Estimate).unwrap();
    assert_eq!(b.stages, vec![Stage::Estimate]);
    assert!(b.theorem_report.is_none() && b.radius_bounds.is_none());
    assert!(!dir.path().join("periodic_scores.csv").exists());
}

#[test]
fn jsr_subcommand_on_golden_pair() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .arg("jsr")
        .arg(common::fixture("golden_pair.json"))
        .arg("--output-dir")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("jsr.json")).unwrap()).unwrap();
    let bb = &v["branch_and_bound"];
    assert!(bb["lower"].as_f64().unwrap() >= 1.617);
    assert!(bb["upper"].as_f64().unwrap() <= 1.620);
    assert!(!dir.path().join("exponents.csv").exists());
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let run_seed = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let st = bin()
            .args(["estimate", "--seed", seed])
            .arg(common::fixture("golden_pair.json"))
            .arg("--output-dir")
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        std::fs::read(out.join("exponents.csv")).unwrap()
    };
    assert_ne!(run_seed("1", "a"), run_seed("2", "b"));
    assert_eq!(run_seed("1", "a"), run_seed("1", "c"));
}

/// Numeric leaves must agree to 1e-12 relative; everything else exactly.
fn assert_close(a: &Value, b: &Value, path: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!(common::rel_err(x, y) < 1e-12 || x == y, "{path}: {x} vs {y}");
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{path}");
            for (k, v) in x {
                assert_close(v, &y[k], &format!("{path}.{k}"));
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{path}");
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                assert_close(u, v, &format!("{path}[{i}]"));
            }
        }
        _ => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn diag_pair_matches_frozen_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .arg("run")
        .arg(common::fixture("diag_pair.json"))
        .arg("--output-dir")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let got: Value = serde_json::from_slice(&std::fs::read(dir.path().join("bundle.json")).unwrap()).unwrap();
    let want: Value =
        serde_json::from_slice(&std::fs::read(common::fixture("golden/diag_pair_bundle.json")).unwrap()).unwrap();
    assert_close(&got, &want, "bundle");
    let parsed: ResultBundle = serde_json::from_value(got).unwrap();
    assert_eq!(parsed.provenance.timestamp, "1970-01-01T00:00:00Z");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(eps in 1e-6f64..1.0, seed in any::<u64>(), tol in 1e-12f64..1e-2, n in 1usize..100_000) {
        let mut cfg = ExperimentConfig::load(&common::fixture("diag_pair.json")).unwrap();
        cfg.eps = eps;
        cfg.seed = seed;
        cfg.lyapunov.tail_tol = tol;
        cfg.horizons.n = n;
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back.eps.to_bits(), cfg.eps.to_bits());
        prop_assert_eq!(back, cfg);
    }
}
