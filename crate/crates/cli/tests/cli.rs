use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn seppnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seppnet"))
        .args(args)
        .env_remove("SEPPNET_SEED")
        .output()
        .expect("run seppnet")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = seppnet(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_exits_zero() {
    for sub in ["design", "simulate", "fit", "eval", "theory", "heatmap", "sweep", "phase", "discretize", "cluster"] {
        let o = seppnet(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
    }
}

#[test]
fn missing_argument_is_usage_error() {
    let o = seppnet(&["fit"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: E_USAGE"), "{}", stderr(&o));
}

#[test]
fn negative_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    std::fs::write(&x, "node_0,node_1\n1,0\n0,-1\n").unwrap();
    let o = seppnet(&["fit", "--counts", p(&x)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("E_COUNTS_NEGATIVE"), "{}", stderr(&o));
}

#[test]
fn malformed_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, "{\"nu\": [0.0]}").unwrap();
    let o = seppnet(&["simulate", "--model", p(&m), "--T", "10"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("E_MODEL_PARSE"), "{}", stderr(&o));
}

#[test]
fn design_simulate_fit_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (m, x, f) = (dir.path().join("m.json"), dir.path().join("x.csv"), dir.path().join("f.json"));
    ok(&["design", "--kind", "sparse", "--M", "4", "--s", "3", "--seed", "5", "--out", p(&m)]);
    assert!(dir.path().join("m.json.manifest.json").exists());
    ok(&["simulate", "--model", p(&m), "--T", "400", "--seed", "2", "--out", p(&x)]);
    let counts = std::fs::read_to_string(&x).unwrap();
    assert_eq!(counts.lines().count(), 401);
    assert_eq!(counts.lines().next().unwrap(), "node_0,node_1,node_2,node_3");

    ok(&["fit", "--counts", p(&x), "--reg", "l1", "--out", p(&f)]);
    let fitted: Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    assert_eq!(fitted["A"].as_array().unwrap().len(), 4);
    assert!(fitted["fit"]["converged"].as_bool().unwrap());
    let trace: Vec<f64> =
        fitted["fit"]["objective_trace"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));

    // The fitted file is itself a valid model.
    let o = ok(&["eval", "--model", p(&f), "--counts", p(&x)]);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let (ll, sat) = (report["loglik"].as_f64().unwrap(), report["saturated_loglik"].as_f64().unwrap());
    assert!(ll < sat, "{ll} vs {sat}");
    ok(&["cluster", "--model", p(&f), "--k", "2"]);
    ok(&["theory", "--model", p(&m), "--s", "3", "--T", "1000"]);
}

#[test]
fn env_seed_overrides_flag() {
    let run = |env: Option<&str>, seed: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_seppnet"));
        c.args(["design", "--kind", "sparse", "--M", "6", "--s", "4", "--seed", seed]);
        match env {
            Some(v) => c.env("SEPPNET_SEED", v),
            None => c.env_remove("SEPPNET_SEED"),
        };
        c.output().unwrap().stdout
    };
    assert_eq!(run(Some("9"), "1"), run(None, "9"));
    assert_ne!(run(None, "1"), run(None, "9"));
}

#[test]
fn theory_lambda_needs_amax() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    std::fs::write(&x, "node_0\n1\n0\n2\n1\n").unwrap();
    let o = seppnet(&["fit", "--counts", p(&x), "--lambda", "theory:C=1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn heatmap_writes_contour_sibling() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.csv");
    ok(&["heatmap", "--amax", "0:0.6:0.1", "--u", "3,6", "--contour", "0.05", "--out", p(&out)]);
    let main = std::fs::read_to_string(&out).unwrap();
    assert_eq!(main.lines().count(), 1 + 2 * 7);
    let contour = std::fs::read_to_string(dir.path().join("k.contour.csv")).unwrap();
    assert!(contour.starts_with("u,a_max"));
}

#[test]
fn discretize_counts_events() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.csv");
    std::fs::write(&e, "time,node\n0.1,0\n0.2,0\n1.7,1\n").unwrap();
    let o = ok(&["discretize", "--events", p(&e), "--delta", "1", "--M", "2", "--horizon", "2"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "node_0,node_1\n2,0\n0,1\n");
}
