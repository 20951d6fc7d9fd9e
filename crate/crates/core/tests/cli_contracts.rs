use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_warpflow"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> i32 {
    let status = bin()
        .args(args)
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .status()
        .unwrap();
    status.code().unwrap()
}

const REFERENCE: &str = r#"{
  "space": {"n": 2, "family": {"hyperbolic": {"c": 1.0}}, "r_max": 3.0},
  "grid": {"mode": "axisym", "resolution": 32},
  "initial": {"r_base": 1.0, "perturbation": [{"l": 1, "amplitude": 0.05}]},
  "flow": {"dt_policy": {"adaptive": {"c_cfl": 0.2}}, "t_max": 1.0, "grad_tol": 1e-12, "monitors_every": 10, "snapshot_every": 500},
  "monitors": {"alphas": [0.0, 0.5, 2.0]}
}"#;

#[test]
fn simulate_writes_contract_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", REFERENCE);
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate"], &cfg, &out), 0);

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,dt,max_grad_sq,V_phi,V_phi_alpha_0,V_phi_alpha_0.5,V_phi_alpha_2,A0_phi,A1_phi,min_smin,max_speed,r_min_node,r_max_node"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect())
        .collect();
    assert!(rows.len() > 2);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0], "t strictly increasing");
        assert!(w[1][1] > 0.0);
    }
    for field in trace.lines().nth(1).unwrap().split(',') {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.len(), 18, "17 significant digits in {field}");
    }

    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for key in ["r_infinity", "r_star", "measured_decay_rate", "beta_hat", "converged"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    let verdicts: Value = serde_json::from_str(&fs::read_to_string(out.join("verdicts.json")).unwrap()).unwrap();
    for v in verdicts.as_array().unwrap() {
        for key in ["name", "passed", "worst_violation", "tolerance", "location", "preconditions_held"] {
            assert!(v.get(key).is_some(), "{key} in {v}");
        }
    }

    let snap = fs::read_to_string(out.join("gamma_0.csv")).unwrap();
    assert_eq!(snap.lines().next().unwrap(), "vartheta,gamma");
    assert_eq!(snap.lines().count(), 34);
    let snapshots = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("gamma_"))
        .count();
    assert_eq!(snapshots, 2, "initial and final snapshots");
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        &REFERENCE.replace(
            r#""initial": {"r_base": 1.0, "perturbation": [{"l": 1, "amplitude": 0.05}]}"#,
            r#""initial": {"r_base": 1.0, "random": {"l_max": 3, "amplitude": 0.04}}"#,
        ),
    );
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(bin().args(["--seed", "11", "--quiet", "simulate"]).arg(&cfg).arg("--out").arg(&a).status().unwrap().code(), Some(0));
    assert_eq!(bin().args(["--seed", "11", "--quiet", "simulate"]).arg(&cfg).arg("--out").arg(&b).status().unwrap().code(), Some(0));
    assert_eq!(bin().args(["--seed", "12", "--quiet", "simulate"]).arg(&cfg).arg("--out").arg(&c).status().unwrap().code(), Some(0));
    for f in ["trace.csv", "verdicts.json", "summary.json", "gamma_0.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("gamma_0.csv")).unwrap(), fs::read(c.join("gamma_0.csv")).unwrap());
}

#[test]
fn slice_config_has_constant_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "slice.json",
        r#"{
          "space": {"n": 2, "family": {"hyperbolic": {"c": 1.0}}, "r_max": 3.0},
          "grid": {"mode": "axisym", "resolution": 32},
          "initial": {"r_base": 1.0},
          "flow": {"t_max": 0.1, "grad_tol": 1e-12}
        }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate"], &cfg, &out), 0);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows: Vec<&str> = trace.lines().skip(1).collect();
    assert!(!rows.is_empty());
    let first: Vec<&str> = rows[0].split(',').skip(2).collect();
    for r in &rows {
        assert_eq!(r.split(',').skip(2).collect::<Vec<_>>(), first);
    }
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let below = REFERENCE
        .replace(r#""r_max": 3.0"#, r#""r_min": 0.5, "r_max": 3.0"#)
        .replace(r#""r_base": 1.0"#, r#""r_base": 0.2"#);
    assert_eq!(run(&["simulate"], &write(dir.path(), "below.json", &below), &out), 2);
    let typo = REFERENCE.replace("\"grad_tol\"", "\"grad_tolerance\"");
    assert_eq!(run(&["simulate"], &write(dir.path(), "typo.json", &typo), &out), 2);
    let cfl = REFERENCE.replace("\"c_cfl\": 0.2", "\"c_cfl\": 1.5");
    assert_eq!(run(&["simulate"], &write(dir.path(), "cfl.json", &cfl), &out), 2);
    assert_eq!(run(&["simulate"], &dir.path().join("missing.json"), &out), 2);
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn run_abort_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let unstable = REFERENCE.replace(r#"{"adaptive": {"c_cfl": 0.2}}"#, r#"{"fixed": {"dt": 0.5}}"#);
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate"], &write(dir.path(), "u.json", &unstable), &out), 3);
}

#[test]
fn snapshot_restart_matches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", REFERENCE);
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate"], &cfg, &out), 0);
    let restart = REFERENCE.replace(
        r#""initial": {"r_base": 1.0, "perturbation": [{"l": 1, "amplitude": 0.05}]}"#,
        r#""initial": {"snapshot": "out/gamma_0.csv"}"#,
    );
    let cfg2 = write(dir.path(), "restart.json", &restart);
    let out2 = dir.path().join("out2");
    assert_eq!(run(&["simulate"], &cfg2, &out2), 0);
    assert_eq!(
        fs::read(out.join("trace.csv")).unwrap(),
        fs::read(out2.join("trace.csv")).unwrap()
    );
}

#[test]
fn verify_space_reports_staticity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "h.json",
        r#"{"space": {"n": 2, "family": {"hyperbolic": {"c": 1.0}}, "r_max": 3.0}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["verify-space"], &cfg, &out), 0);
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.join("space_report.json")).unwrap()).unwrap();
    assert_eq!(rep["is_static"], Value::Bool(true));
    assert!(rep["c0"].as_f64().unwrap().abs() < 1e-12);

    let table = "# r phi phi' phi'' phi'''\n".to_string()
        + &(0..=40)
            .map(|k| {
                let r = 0.1 + 0.05 * k as f64;
                let e = r.exp();
                format!("{r} {e} {e} {e} {e}\n")
            })
            .collect::<String>();
    write(dir.path(), "exp.dat", &table);
    let cfg = write(
        dir.path(),
        "exp.json",
        r#"{"space": {"n": 2, "family": {"custom": {"path": "exp.dat"}}}}"#,
    );
    assert_eq!(run(&["verify-space"], &cfg, &out), 1);
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.join("space_report.json")).unwrap()).unwrap();
    assert_eq!(rep["is_static"], Value::Bool(false));
    assert_eq!(rep["is_substatic"], Value::Bool(true));
}

#[test]
fn profiles_are_strictly_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"space": {"n": 2, "family": {"schwarzschild": {"m": 1.0}}, "r_width": 5.0},
            "profiles": {"alphas": [0.0, 0.5], "samples": 101}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["profiles"], &cfg, &out), 0);
    for a in ["0", "0.5"] {
        let text = fs::read_to_string(out.join(format!("profiles_alpha_{a}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "r,V_phi,V_phi_alpha,A0_phi,A1_phi");
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 101);
        for w in rows.windows(2) {
            for c in 0..5 {
                assert!(w[1][c] > w[0][c], "alpha {a} column {c}");
            }
        }
    }
}

#[test]
fn inequality_batch_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "i.json",
        r#"{"space": {"n": 2, "family": {"schwarzschild": {"m": 1.0}}, "r_width": 4.0},
            "grid": {"mode": "axisym", "resolution": 64},
            "inequalities": {"count": 4, "alphas": [0.0, 1.0],
               "random": {"l_max": 3, "amplitude": 0.02, "r_base_range": [3.4, 3.8],
                          "static_convex": true, "within_epsilon0": true}},
            "seed": 5}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["inequalities"], &cfg, &out), 0);
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("inequalities.json")).unwrap()).unwrap();
    assert_eq!(doc.as_array().unwrap().len(), 4);
}

#[test]
fn sweep_runs_each_patch() {
    let dir = tempfile::tempdir().unwrap();
    let base: Value = serde_json::from_str(REFERENCE).unwrap();
    let mut doc = base.clone();
    doc["flow"]["t_max"] = Value::from(0.05);
    doc["sweep"] = serde_json::json!({
        "runs": [{"grid": {"resolution": 16}}, {"initial": {"r_base": 1.2}}, {"flow": {"t_max": 5.0, "dt_policy": {"adaptive": null, "fixed": {"dt": 0.5}}}}],
        "workers": 2
    });
    let cfg = write(dir.path(), "sweep.json", &doc.to_string());
    let out = dir.path().join("out");
    assert_eq!(run(&["sweep"], &cfg, &out), 3);
    for k in 0..2 {
        assert!(out.join(format!("run_{k}/trace.csv")).exists());
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let codes: Vec<i64> = report.as_array().unwrap().iter().map(|e| e["exit_code"].as_i64().unwrap()).collect();
    assert_eq!(codes, vec![0, 0, 3]);
}
