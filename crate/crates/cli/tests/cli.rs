//! End-to-end checks of the `weylab` binary: exit codes, artifact layout,
//! and rerun determinism.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_weylab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn weylab")
}

fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{path:?}: {e}"))
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {text}"))
}

#[test]
fn config_errors_exit_2_with_json_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out_arg = dir.path().join("out");
    let out_s = out_arg.to_str().unwrap();

    // unknown family
    let out = run(&["weyl", "--family", "nope", "--n", "10", "--out", out_s]);
    assert_eq!(out.status.code(), Some(2));
    let diag = stderr_json(&out);
    assert_eq!(diag["kind"], "config");
    assert!(diag["error"].as_str().unwrap().contains("nope"));

    // empty sample-count list
    let out = run(&["weyl", "--family", "circle", "--n", "", "--out", out_s]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["kind"], "config");

    // unknown key in the config file
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "family = \"circle\"\nwat = 1\n").unwrap();
    let out = run(&[
        "weyl",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "10",
        "--out",
        out_s,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]
        .as_str()
        .unwrap()
        .contains("wat"));
}

#[test]
fn compute_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out_s = dir.path().join("out");
    // the node rule wants millions of nodes here; the budget refuses
    let out = run(&[
        "fourth-moment",
        "--family",
        "circle",
        "--n",
        "8",
        "--tau",
        "6",
        "--route",
        "trapezoid",
        "--node-budget",
        "4096",
        "--out",
        out_s.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let diag = stderr_json(&out);
    assert_eq!(diag["kind"], "compute");
    assert!(diag["error"].as_str().unwrap().contains("budget"));
}

#[test]
fn weyl_run_is_deterministic_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let args = |o: &Path| -> Vec<String> {
        [
            "weyl",
            "--family",
            "circle",
            "--rho-rule",
            "poly:1.5",
            "--n",
            "100,400,1600",
            "--h-max",
            "1",
            "--out",
            o.to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let first = bin().args(args(&out_a)).output().unwrap();
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = bin().args(args(&out_b)).output().unwrap();
    assert!(second.status.success());

    let csv_a = std::fs::read(out_a.join("weyl.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("weyl.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "weyl.csv differs between identical runs");
    let sum_a = std::fs::read(out_a.join("summary.json")).unwrap();
    let sum_b = std::fs::read(out_b.join("summary.json")).unwrap();
    assert_eq!(sum_a, sum_b, "summary.json differs between identical runs");

    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,rho_bits,h,abs_S,discrepancy"));
    // three n values, four representative frequencies each at h_max = 1
    assert_eq!(lines.count(), 12);

    let summary = read_json(&out_a.join("summary.json"));
    assert_eq!(summary["command"], "weyl");
    assert_eq!(summary["inputs_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary["verdict"]["status"], "equidistributing");
    assert!(summary["verdict"]["weyl_slope"].as_f64().unwrap() < -0.1);
    // timestamps live next door so the summary itself can stay reproducible
    let meta = read_json(&out_a.join("run_meta.json"));
    assert!(meta["unix_time"].as_u64().unwrap() > 0);
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "family = \"circle\"\nn = \"50\"\nrho_rule = \"poly:1.5\"\nh_max = 1\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "weyl",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "80",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(out_dir.join("weyl.csv")).unwrap();
    assert!(text.contains("\n80,"), "flag value should win:\n{text}");
    assert!(!text.contains("\n50,"));
}

#[test]
fn rotations_draws_are_seeded_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for o in [&out_a, &out_b] {
        let out = run(&[
            "rotations",
            "--n",
            "50",
            "--draws",
            "16",
            "--seed",
            "11",
            "--contrast-n",
            "4",
            "--out",
            o.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(out_a.join("rotations.csv")).unwrap();
    assert_eq!(a, std::fs::read(out_b.join("rotations.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some("draw,omega,max_abs"));
    assert_eq!(text.lines().count(), 17);

    let summary = read_json(&out_a.join("summary.json"));
    let frac = summary["fraction_within"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&frac));
    // the deterministic counterexample block rides along
    assert_eq!(summary["contrast"]["confined"], true);
}

#[test]
fn bad_dilation_poly_emits_parseable_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "bad-dilation",
        "poly",
        "--family",
        "monomial:2",
        "--n",
        "4,6",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["all_pass"], true);
    assert_eq!(summary["dilation_window_ok"], true);
    assert_eq!(summary["certificate_errors_ok"], true);

    let certs = read_json(&out_dir.join("certificates.json"));
    let arr = certs.as_array().unwrap();
    assert_eq!(arr.len(), 2);
    for c in arr {
        assert!(c["rho_tilde"].is_string() || c["rho_tilde"].is_number());
    }
    let text = std::fs::read_to_string(out_dir.join("bad_dilation_poly.csv")).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("n,kappa,q_scanned,rho_tilde,rho_bits,max_error,abs_S,max_delta,pass")
    );
}

#[test]
fn vdc_sweep_writes_one_csv_per_order() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "vdc-sweep",
        "--l",
        "2,3",
        "--grid-points",
        "21",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for l in [2, 3] {
        let text =
            std::fs::read_to_string(out_dir.join(format!("vdc_sweep_l{l}.csv"))).unwrap();
        assert_eq!(text.lines().next(), Some("lambda,j,nu,epsilon,t1,t2"));
        assert!(text.lines().count() > 1);
    }
    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["all_uniform_bounds_negative"], true);
}

#[test]
fn sublevel_reports_components_and_measure() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sublevel",
        "--family",
        "circle",
        "--delta",
        "0.5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("sublevel.csv")).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("x,delta,component_count,complement_measure")
    );
    let summary = read_json(&out_dir.join("summary.json"));
    assert!(summary["max_component_count"].as_u64().unwrap() >= 1);
}

#[test]
fn rnd_order_reports_finite_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "rnd-order",
        "--family",
        "monomial:2",
        "--h-max",
        "3",
        "--j-max",
        "6",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("rnd_order.csv")).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("family,h_box,j_max,order,witness_h,witness_j,numerical,next_box_order")
    );
    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["order"], "2");
}
