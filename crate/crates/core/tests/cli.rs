use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relaxbc::fixtures::double_characteristic;
use relaxbc::linalg::{split_invariant_subspaces, to_complex, C64};
use relaxbc::reduction::Analysis;
use relaxbc::spectral::FrequencyPoint;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn relaxbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaxbc"))
        .args(args)
        .output()
        .expect("spawn relaxbc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Double-characteristic system whose B annihilates `R₁ s` for the stable
/// vector `s` at `ξ = 1, η = 0`, so the Kreiss determinant vanishes there.
fn adversarial_system(dir: &Path) -> PathBuf {
    let sys = double_characteristic();
    let an = Analysis::new(sys.clone()).unwrap();
    let m = an
        .build_m(&FrequencyPoint::new(C64::new(1.0, 0.0), vec![], 0.0))
        .unwrap();
    let s = split_invariant_subspaces(&m).unwrap().basis_s.column(0).into_owned();
    let v = to_complex(&an.frame.r1) * s;
    let k = (0..v.len())
        .max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm()))
        .unwrap();
    let phase = v[k] / v[k].norm();
    let v: Vec<f64> = v.iter().map(|z| (z / phase).re).collect();
    let r0: Vec<f64> = an.frame.r0.column(0).iter().copied().collect();
    let b = [
        r0[1] * v[2] - r0[2] * v[1],
        r0[2] * v[0] - r0[0] * v[2],
        r0[0] * v[1] - r0[1] * v[0],
    ];
    let json = serde_json::json!({
        "d": 1, "n": 3, "r": 2,
        "A": [[[0.0, 1.0, 0.0], [1.0, 0.5, 0.5], [0.0, 0.5, 0.0]]],
        "S": [[-1.0, 0.2], [0.2, -2.0]],
        "B": [b],
    });
    let p = dir.join("adversarial.json");
    std::fs::write(&p, json.to_string()).unwrap();
    p
}

fn write_scenario(dir: &Path, name: &str, body: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body.to_string()).unwrap();
    p
}

fn small_scenario(system: &Path, epsilons: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "system": path_str(system),
        "boundary": [{ "type": "sin" }, { "type": "cos" }],
        "u0": [{ "type": "sum", "terms": [
            { "type": "sin", "amplitude": -1, "frequency": 0.3333333333333333 },
            { "type": "cos", "amplitude": 0.3333333333333333, "frequency": 0.3333333333333333 }
        ]}],
        "T": 0.1,
        "X_max": 1.0,
        "grid": { "kind": "uniform", "cells": 400 },
        "epsilons": epsilons,
        "layer_grid": { "nz": 200, "nt": 100 }
    })
}

#[test]
fn validate_exit_codes() {
    let ok = relaxbc(&["validate", path_str(&fixture("worked_example.json"))]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("PASS"));

    let bad = relaxbc(&["validate", path_str(&fixture("rank_deficient_b.json"))]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("rank(B) < n_plus"));

    let ragged = relaxbc(&["validate", path_str(&fixture("ragged.json"))]);
    assert_eq!(ragged.status.code(), Some(2));
    assert!(stderr(&ragged).contains("rectangular"), "{}", stderr(&ragged));

    let missing = relaxbc(&["validate", "/nonexistent/system.json"]);
    assert_eq!(missing.status.code(), Some(2));

    let usage = relaxbc(&["validate"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn gkc_passes_and_rejects_bad_options() {
    let sys = fixture("worked_example.json");
    let ok = relaxbc(&["gkc", path_str(&sys)]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("Kreiss check: PASS"));

    let zero = relaxbc(&["gkc", path_str(&sys), "--resolution", "0"]);
    assert_eq!(zero.status.code(), Some(2));
    assert!(stderr(&zero).contains("resolution"));

    let jobs = relaxbc(&["--jobs", "0", "gkc", path_str(&sys)]);
    assert_eq!(jobs.status.code(), Some(2));
}

#[test]
fn reduce_prints_the_worked_example_condition() {
    let dir = tempfile::tempdir().unwrap();
    let o = relaxbc(&[
        "reduce",
        path_str(&fixture("worked_example.json")),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("u(0,t) = 1.000·g(t) + 0.333·h(t)"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("reduce.json")).unwrap()).unwrap();
    let prov = &report["provenance"];
    assert_eq!(prov["tool"], "relaxbc");
    assert_eq!(prov["forced"], false);
    assert_eq!(prov["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(report["reduced_bc"]["equations"][0], "u(0,t) = 1.000·g(t) + 0.333·h(t)");
    assert!(dir.path().join("reduce_summary.txt").exists());
}

#[test]
fn adversarial_boundary_fails_the_kreiss_check() {
    let dir = tempfile::tempdir().unwrap();
    let sys = adversarial_system(dir.path());

    let v = relaxbc(&["validate", path_str(&sys)]);
    assert_eq!(v.status.code(), Some(0), "{}", stdout(&v));

    let g = relaxbc(&["gkc", path_str(&sys)]);
    assert_eq!(g.status.code(), Some(1), "{}", stdout(&g));
    assert!(stdout(&g).contains("Kreiss check: FAIL"));

    let r = relaxbc(&["reduce", path_str(&sys)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("generalized Kreiss condition failed"));

    let out = dir.path().join("forced");
    let f = relaxbc(&["reduce", path_str(&sys), "--force", "--out", path_str(&out)]);
    assert!(stdout(&f).contains("FORCED"), "{}{}", stdout(&f), stderr(&f));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("reduce.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["forced"], true);
}

#[test]
fn scenario_errors_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let sys = fixture("worked_example.json");
    let empty = write_scenario(dir.path(), "empty.json", small_scenario(&sys, serde_json::json!([])));
    let o = relaxbc(&["converge", path_str(&empty)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no epsilons"));

    let mut body = small_scenario(&sys, serde_json::json!([1e-2]));
    body.as_object_mut().unwrap().remove("system");
    let nosys = write_scenario(dir.path(), "nosys.json", body);
    assert_eq!(relaxbc(&["converge", path_str(&nosys)]).status.code(), Some(2));

    let mut body = small_scenario(&sys, serde_json::json!([1e-2]));
    body["boundary"] = serde_json::json!([{ "type": "sin" }]);
    let short = write_scenario(dir.path(), "short.json", body);
    let o = relaxbc(&["simulate", path_str(&short), "--epsilon", "1e-2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("boundary signals"));
}

#[test]
fn simulate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let sys = fixture("worked_example.json");
    let sc = write_scenario(dir.path(), "s.json", small_scenario(&sys, serde_json::json!([1e-2])));
    let out = dir.path().join("out");
    let o = relaxbc(&["simulate", path_str(&sc), "--epsilon", "1e-2", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let snap = std::fs::read_to_string(out.join("simulate_snapshot.csv")).unwrap();
    assert!(snap.starts_with("x,u_relax,v_relax,u_composite,v_composite,u_outer"));
    assert_eq!(snap.lines().count(), 401);
    let trace = std::fs::read_to_string(out.join("simulate_relaxation_trace.csv")).unwrap();
    assert!(trace.starts_with("t,u,v"));
    assert!(out.join("simulate.json").exists());
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sys = fixture("worked_example.json");
    let sc = write_scenario(
        dir.path(),
        "s.json",
        small_scenario(&sys, serde_json::json!([1e-2, 5e-3])),
    );
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        for args in [
            vec!["reduce", path_str(&sys)],
            vec!["converge", path_str(&sc), "--naive-bc"],
            vec!["gkc", path_str(&fixture("double_characteristic.json"))],
        ] {
            let mut a = args.clone();
            a.extend(["--out", path_str(&out)]);
            let o = relaxbc(&a);
            assert!(o.status.code().unwrap() <= 1, "{}", stderr(&o));
        }
    }
    for f in [
        "reduce.json",
        "converge.json",
        "converge.csv",
        "gkc.json",
        "gkc_samples.csv",
    ] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
    let other = dir.path().join("c");
    relaxbc(&["reduce", path_str(&sys), "--seed", "7", "--out", path_str(&other)]);
    let hash = |p: PathBuf| -> String {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v["provenance"]["config_sha256"].as_str().unwrap().to_string()
    };
    assert_ne!(hash(dir.path().join("a/reduce.json")), hash(other.join("reduce.json")));
}
