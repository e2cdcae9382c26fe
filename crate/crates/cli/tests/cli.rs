use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mfgc::model::{random_affine_model, RandomModelSpec};
use serde_json::Value;
use tempfile::TempDir;

fn mfgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfgc")).args(args).env("MFGC_THREADS", "2").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Transitions ignore state, action and measure, so K = 0.
const FLAT: &str = r#"{
  "schema": "mfgc-model/1", "n_states": 2, "n_actions": 2,
  "populations": [
    {"beta": 0.5, "rho": 1.0,
     "cost": {"type": "affine", "c0": [[0.0, 1.0], [0.5, 0.2]]},
     "kernel": {"type": "mixture", "p0": [[[0.3, 0.7], [0.3, 0.7]], [[0.3, 0.7], [0.3, 0.7]]]}},
    {"beta": 0.7, "rho": 2.0,
     "cost": {"type": "affine", "c0": [[1.0, 0.0], [0.2, 0.4]]},
     "kernel": {"type": "mixture", "p0": [[[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]]]}}
  ]
}"#;

/// Small certified affine model.
fn calm(seed: u64) -> String {
    let spec = RandomModelSpec {
        cost_scale: 0.5,
        weight_scale: 0.1,
        eps: (0.05, 0.1),
        kernel_flatness: 0.9,
        rho: (1.0, 2.0),
        ..Default::default()
    };
    random_affine_model(&spec, seed).to_json().unwrap()
}

/// Strong coupling with heavy discounting; no certificate.
fn wild() -> String {
    let spec = RandomModelSpec {
        beta: (0.9, 0.95),
        rho: (0.05, 0.1),
        cost_scale: 5.0,
        weight_scale: 5.0,
        eps: (0.5, 0.9),
        ..Default::default()
    };
    random_affine_model(&spec, 3).to_json().unwrap()
}

#[test]
fn certify_flat_model() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", FLAT);
    let out = d.path().join("out");
    let o = mfgc(&["certify", m.to_str().unwrap(), "--mode", "stationary", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["schema"], "mfgc-report/1");
    assert_eq!(r["result"]["contraction"]["stationary"]["closed_form_sum"], 0.0);
}

#[test]
fn certify_finite_both_variants() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &calm(1));
    let o = mfgc(&["certify", m.to_str().unwrap(), "--mode", "finite", "--variant", "both", "--out", d.path().to_str().unwrap()]);
    assert!(matches!(code(&o), 0 | 2));
    let fin = &report(d.path())["result"]["contraction"]["finite_horizon"];
    for v in ["variant_a", "variant_b"] {
        assert!(fin[v]["r_star"].is_number());
        assert!(fin[v]["v_star"].is_number());
    }
    assert!(fin["regime"].is_string());
}

#[test]
fn wild_model_is_not_certified() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &wild());
    let o = mfgc(&["certify", m.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(report(d.path())["result"]["certified"], false);
}

#[test]
fn malformed_file_exits_one() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", r#"{"schema": "mfgc-model/1", "n_states": 2, "bogus": 1}"#);
    let o = mfgc(&["certify", m.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
    assert_eq!(report(d.path())["exit_code"], 1);
}

#[test]
fn unknown_config_key_rejected() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", FLAT);
    let c = write(&d, "c.json", r#"{"tol": 1e-6, "tolerance": 1}"#);
    let o = mfgc(&["solve", m.to_str().unwrap(), "--config", c.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));
}

#[test]
fn stationary_solve_converges() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &calm(2));
    let o = mfgc(&["solve", m.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path());
    assert!(r["result"]["residual"].as_f64().unwrap() <= 1e-9);
    let csv = std::fs::read_to_string(d.path().join("measure.csv")).unwrap();
    assert!(csv.starts_with("population,state,mass\n"));
}

#[test]
fn finite_solve_writes_every_slice() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &calm(2));
    let o = mfgc(&["solve", m.to_str().unwrap(), "--horizon", "8", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let mut rdr = csv::Reader::from_path(d.path().join("flow.csv")).unwrap();
    let mut ts: Vec<usize> = rdr.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    ts.dedup();
    assert_eq!(ts, (0..8).collect::<Vec<_>>());
}

#[test]
fn iteration_limit_keeps_best_iterate() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &calm(2));
    let o = mfgc(&["solve", m.to_str().unwrap(), "--max-iter", "2", "--tol", "1e-15", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(report(d.path())["status"], "iteration_limit");
    assert!(d.path().join("measure.csv").exists());
}

#[test]
fn scan_is_monotone_and_writes_ratios() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &calm(1));
    let o = mfgc(&["scan", m.to_str().unwrap(), "--horizons", "3,10,40,120", "--ratio-horizon", "60", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(d.path().join("rho_st.csv")).unwrap();
    let rho: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(rho.len(), 4);
    assert!(rho.windows(2).all(|w| w[1] >= w[0] - 1e-10));
    let ratios = std::fs::read_to_string(d.path().join("ratios.csv")).unwrap();
    assert!(ratios.lines().count() > 50);
}

#[test]
fn scan_empty_interval_exits_two() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &wild());
    let o = mfgc(&["scan", m.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(report(d.path())["message"].as_str().unwrap().contains("empty r-interval"));
}

#[test]
fn campaign_has_no_disagreements() {
    let d = TempDir::new().unwrap();
    let o = mfgc(&["slowfast", "--campaign", "1000", "--seed", "7", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(report(d.path())["result"]["campaign"]["disagreements"], 0);
}

#[test]
fn split_out_of_range_exits_one() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &calm(1));
    let o = mfgc(&["slowfast", m.to_str().unwrap(), "--split", "2", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn stationary_split_matches_certify() {
    let d = TempDir::new().unwrap();
    for (k, text) in [calm(1), wild()].iter().enumerate() {
        let m = write(&d, &format!("m{k}.json"), text);
        let a = d.path().join(format!("a{k}"));
        let b = d.path().join(format!("b{k}"));
        let c1 = code(&mfgc(&["certify", m.to_str().unwrap(), "--out", a.to_str().unwrap()]));
        let c2 = code(&mfgc(&["slowfast", m.to_str().unwrap(), "--split", "1", "--out", b.to_str().unwrap()]));
        assert_eq!(c1, c2);
        assert_eq!(report(&a)["result"]["certified"], report(&b)["result"]["slowfast"]["certified"]);
    }
}

#[test]
fn rates_on_unstable_model_exits_two() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &wild());
    let o = mfgc(&["rates", m.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(report(d.path())["message"].as_str().unwrap().contains("not stable"));
}

#[test]
fn rates_validates_t_star() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &calm(1));
    let o = mfgc(&["rates", m.to_str().unwrap(), "--experiment", "weights", "--t-star", "1e6", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(report(d.path())["message"].as_str().unwrap().contains("outside the admissible interval"));
}

#[test]
fn rates_emits_slope_csv() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &calm(1));
    let o = mfgc(&["rates", m.to_str().unwrap(), "--experiment", "decay", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("decay.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("horizon,error"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn reruns_are_identical() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", &calm(4));
    let a = d.path().join("a");
    let b = d.path().join("b");
    mfgc(&["scan", m.to_str().unwrap(), "--horizons", "5,20", "--out", a.to_str().unwrap()]);
    mfgc(&["scan", m.to_str().unwrap(), "--horizons", "5,20", "--out", b.to_str().unwrap()]);
    for f in ["report.json", "rho_st.csv", "v_grid.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
