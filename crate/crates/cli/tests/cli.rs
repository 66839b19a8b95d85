use std::path::Path;
use std::process::{Command, Output};

use qaoa_noise::{Ensemble, IsingInstance};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qaoa-noise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: impl AsRef<Path>) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--n", "8", "--ensemble", "pm1", "--seed", "3", "--out", s(dir.path())]);
    let read = IsingInstance::read(dir.path().join("instance.json")).unwrap();
    assert_eq!(read, IsingInstance::random(8, Ensemble::Pm1, 3).unwrap());
    let manifest = read_json(dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["args"]["seed"], 3);

    ok(&["gen", "--n", "2", "--ensemble", "pm1", "--out", s(dir.path())]);
    let two = IsingInstance::read(dir.path().join("instance.json")).unwrap();
    assert_eq!(two.couplings().len(), 1);
}

#[test]
fn invalid_ensemble_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen", "--n", "3", "--ensemble", "bogus", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert!(err.contains("bogus"));
}

#[test]
fn validation_and_resource_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["mlevel", "--gen", "3,pm1,0", "--depth", "2", "--angles", "0.1,0.2", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["optimize", "--gen", "25,ring,0", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["sweep", "--gen", "13,ring,0", "--depths", "1", "--p", "0", "--restarts", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mlevel_single_qubit_toy() {
    let dir = tempfile::tempdir().unwrap();
    let inst = IsingInstance::new(1, vec![(0, 1.0)], vec![], vec![]).unwrap();
    let path = dir.path().join("z.json");
    inst.write(&path).unwrap();
    let out = dir.path().join("run");
    ok(&["mlevel", "--instance", s(&path), "--angles", "0.7853981633974483,2.356194490192345", "--out", s(&out)]);
    let f = csv_rows(out.join("f_m.csv"));
    let c = csv_rows(out.join("c_m.csv"));
    assert_eq!(f[1][0], "1");
    assert!((f[1][1].parse::<f64>().unwrap() - 0.5).abs() < 1e-12);
    assert!(c[1][1].parse::<f64>().unwrap().abs() < 1e-12);
    assert!((c[0][1].parse::<f64>().unwrap() + 1.0).abs() < 1e-12);
    // too few points to fit: recorded, not fatal
    let fits = read_json(out.join("fits.json"));
    assert!(fits["fidelity"]["error"].is_string());
}

#[test]
fn mlevel_full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["mlevel", "--gen", "8,pm1,3", "--budget", "1000000", "--p", "0.1,0.3", "--restarts", "6", "--out", s(out)]);
    let fits = read_json(out.join("fits.json"));
    assert_eq!(fits["exact"], true);
    let (alpha, kappa) = (fits["fidelity"]["alpha"].as_f64().unwrap(), fits["fidelity"]["kappa"].as_f64().unwrap());
    assert!(kappa > 1.0 && fits["cost"]["chi"].as_f64().unwrap() > 1.0);
    assert!(fits["fidelity"]["residual"].as_f64().unwrap().is_finite());
    assert!((fits["fidelity"]["delta"].as_f64().unwrap() - alpha * (kappa - 1.0) / kappa).abs() < 1e-15);
    let at = &fits["evaluations"][1];
    assert_eq!(at["p"], 0.3);
    let gap = at["fidelity_reconstructed"].as_f64().unwrap() - at["fidelity_exact"].as_f64().unwrap();
    assert!(gap.abs() < 1e-10);
    let gap = at["cost_reconstructed"].as_f64().unwrap() - at["cost_exact"].as_f64().unwrap();
    assert!(gap.abs() < 1e-10);
    assert!(out.join("optimize.json").exists());
    let manifest = read_json(out.join("manifest.json"));
    assert_eq!(manifest["args"]["budget"], 1000000);
    assert_eq!(manifest["instance"]["n"], 8);
}

#[test]
fn mlevel_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let base = ["mlevel", "--gen", "5,uniform,2", "--depth", "2", "--budget", "300", "--restarts", "3", "--seed", "9"];
    ok(&[&base[..], &["--jobs", "1", "--out", s(&a)]].concat());
    ok(&[&base[..], &["--jobs", "4", "--out", s(&b)]].concat());
    for file in ["f_m.csv", "c_m.csv", "fits.json", "angles.json"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    assert!(csv_rows(a.join("f_m.csv")).iter().any(|r| r[3] == "false"));
}

#[test]
fn sweep_endpoints_and_single_depth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ends");
    ok(&["sweep", "--gen", "4,pm1,2", "--depths", "1,2", "--p", "0,1", "--restarts", "4", "--out", s(&out)]);
    let rows = csv_rows(out.join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let (p, cost, fid): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        if p == 1.0 {
            assert!(cost.abs() < 1e-10 && (fid - 1.0 / 16.0).abs() < 1e-10);
        } else {
            assert!((fid - 1.0).abs() < 1e-10);
        }
        assert_eq!(r[6], "fixed");
    }

    let single = dir.path().join("single");
    ok(&["sweep", "--gen", "4,pm1,2", "--depths", "1", "--p", "0", "--restarts", "4", "--seed", "5", "--out", s(&single)]);
    let opt = dir.path().join("opt");
    ok(&["optimize", "--gen", "4,pm1,2", "--depths", "1", "--restarts", "4", "--seed", "5", "--out", s(&opt)]);
    let rows = csv_rows(single.join("sweep.csv"));
    assert_eq!(rows.len(), 1);
    let best = read_json(opt.join("optimize.json"))["depths"]["1"]["best_cost"].as_f64().unwrap();
    assert!((rows[0][2].parse::<f64>().unwrap() - best).abs() < 1e-12);
}

#[test]
fn sweep_finds_depth_crossings() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["sweep", "--gen", "6,pm1,1", "--depths", "1-5", "--fit", "--budget", "500", "--out", s(out)]);
    let crossings = csv_rows(out.join("crossings.csv"));
    assert!(crossings.iter().any(|r| r[1].parse::<usize>().unwrap() == r[0].parse::<usize>().unwrap() + 1));
    let rows = csv_rows(out.join("sweep.csv"));
    assert_eq!(rows.len(), 5 * 59);
    assert!(rows.iter().all(|r| !r[4].is_empty() && !r[5].is_empty()));
    let angles = read_json(out.join("angles.json"));
    assert_eq!(angles["5"]["gammas"].as_array().unwrap().len(), 5);
    assert!(out.join("fits.json").exists() && out.join("summary.json").exists());
}

#[test]
fn verify_fast_passes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["verify", "--level", "fast", "--out", s(dir.path())]);
    let report = read_json(dir.path().join("verify.json"));
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["cases"].as_u64().unwrap() > 0));
}

#[test]
fn verify_detects_injected_channel_fault() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--inject-fault", "channel-sign", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("trace_preservation"), "{err}");
    let report = read_json(dir.path().join("verify.json"));
    assert_eq!(report["passed"], false);
    assert!(report["failed"].as_array().unwrap().iter().any(|n| n == "engine_vs_decomposition"));
}
