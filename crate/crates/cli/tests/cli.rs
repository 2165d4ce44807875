use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use soficity_cli::run;

fn run_in(dir: &Path, args: &[&str]) -> i32 {
    let mut v = vec!["soficity".to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(dir.display().to_string());
    run(v)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn heuristic_csv_has_exact_p3() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run_in(t.path(), &["heuristic", "--N", "50"]), 0);
    let csv = fs::read_to_string(t.path().join("heuristic.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,P_n_num,P_n_den,log_Pn,log_Sn_bound,log_product");
    assert!(lines[3].starts_with("3,2,3,"));
    assert_eq!(lines.len(), 51);
    assert!(!csv.contains('\r'));
    let m = manifest(t.path());
    assert_eq!(m["config"], "defaults");
    assert_eq!(m["params"]["n_max"]["source"], "flag");
    assert_eq!(m["exit_code"], 0);
}

#[test]
fn cycles_rows_are_ordered_and_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_in(a.path(), &["cycles", "--m", "2", "--primes", "3..97", "--workers", "1"]), 0);
    assert_eq!(run_in(b.path(), &["cycles", "--m", "2", "--primes", "3..97", "--workers", "4"]), 0);
    let csv = fs::read(a.path().join("cycles.csv")).unwrap();
    assert_eq!(csv, fs::read(b.path().join("cycles.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    let ns: Vec<u64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ns, soficity::arith::primes_in_range(3, 97));
    // the worker count is part of the parameters, so the hashes differ
    assert_ne!(manifest(a.path())["input_hash"], manifest(b.path())["input_hash"]);
}

#[test]
fn prime_power_moduli_flag() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run_in(t.path(), &["cycles", "--prime-powers", "3:1..4"]), 0);
    let csv = fs::read_to_string(t.path().join("cycles.csv")).unwrap();
    let ns: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["3", "9", "27", "81"]);
    assert_eq!(run_in(t.path(), &["cycles", "--m", "2"]), 1);
    assert_eq!(run_in(t.path(), &["cycles", "--primes", "9..3"]), 1);
}

#[test]
fn tampered_certificate_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run_in(t.path(), &["tile", "--n", "1000", "--m", "3"]), 0);
    let cert_path = t.path().join("tiling.json");
    let v = tempfile::tempdir().unwrap();
    assert_eq!(run_in(v.path(), &["verify", "--certificate", cert_path.to_str().unwrap()]), 0);

    let cert: Value = serde_json::from_str(&fs::read_to_string(&cert_path).unwrap()).unwrap();

    // overlap two tiles
    let mut bad = cert.clone();
    let shapes = bad["tiling"]["shapes"].as_array_mut().unwrap();
    let c0 = shapes[0]["centers"][0].clone();
    shapes[1]["centers"].as_array_mut().unwrap().push(c0);
    let p = t.path().join("overlap.json");
    fs::write(&p, serde_json::to_string(&bad).unwrap()).unwrap();
    assert_eq!(run_in(v.path(), &["verify", "--certificate", p.to_str().unwrap()]), 2);
    assert_eq!(manifest(v.path())["status"], "failed");

    // drop most tiles of the top level
    let mut thin = cert.clone();
    let k = thin["tiling"]["shapes"].as_array().unwrap().len();
    thin["tiling"]["shapes"][k - 1]["centers"].as_array_mut().unwrap().truncate(1);
    let p = t.path().join("thin.json");
    fs::write(&p, serde_json::to_string(&thin).unwrap()).unwrap();
    assert_eq!(run_in(v.path(), &["verify", "--certificate", p.to_str().unwrap()]), 2);

    let p = t.path().join("garbage.json");
    fs::write(&p, "{not json").unwrap();
    assert_eq!(run_in(v.path(), &["verify", "--certificate", p.to_str().unwrap()]), 2);
    assert_eq!(run_in(v.path(), &["verify", "--certificate", "/nonexistent/t.json"]), 1);
}

#[test]
fn config_file_and_flag_precedence() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.toml");
    fs::write(&cfg, "n_max = 30\neps = 0.1\n[heuristic]\nn_exact = 20\n").unwrap();
    let out = t.path().join("o");
    let code = run_in(&out, &["heuristic", "--config", cfg.to_str().unwrap(), "--N", "40"]);
    assert_eq!(code, 0);
    let m = manifest(&out);
    assert_eq!(m["params"]["n_max"]["value"], 40);
    assert_eq!(m["params"]["n_max"]["source"], "flag");
    assert_eq!(m["params"]["eps"]["source"], "file");
    assert_eq!(m["params"]["n_exact"]["value"], 20);
    assert_eq!(m["config"], cfg.display().to_string());

    let bad = t.path().join("bad.toml");
    fs::write(&bad, "eps = \"3/10\"\n").unwrap();
    assert_eq!(run_in(&out, &["tile", "--config", bad.to_str().unwrap()]), 1);
    fs::write(&bad, "colour = 3\n").unwrap();
    assert_eq!(run_in(&out, &["heuristic", "--config", bad.to_str().unwrap()]), 1);
    fs::write(&bad, "n_max = \"many\"\n").unwrap();
    assert_eq!(run_in(&out, &["heuristic", "--config", bad.to_str().unwrap()]), 1);

    let missing = t.path().join("absent.toml");
    assert_eq!(run_in(&out, &["heuristic", "--config", missing.to_str().unwrap(), "--N", "10"]), 0);
    assert_eq!(manifest(&out)["config"], "defaults");
}

#[test]
fn usage_errors_exit_one() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run_in(t.path(), &["heuristic", "--frobnicate"]), 1);
    assert_eq!(run_in(t.path(), &["nonsense"]), 1);
    assert_eq!(run_in(t.path(), &["tile", "--eps", "0.3"]), 1);
    assert_eq!(run_in(t.path(), &["tile", "--eps", "one quarter"]), 1);
    assert_eq!(run_in(t.path(), &["search-f", "--n", "10", "--m", "5"]), 1);
    assert_eq!(run(["soficity", "--help"]), 0);
}

#[test]
fn refused_runs_exit_two_and_flag_partial() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run_in(t.path(), &["conjugate", "--n", "1000", "--seed", "1"]), 2);
    let m = manifest(t.path());
    assert_eq!(m["partial"], true);
    assert!(m["message"].as_str().unwrap().contains("admissibility"));
}

#[test]
fn searches_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["search-f", "--n", "30", "--m", "7", "--budget", "5000", "--seeds", "3"];
    assert_eq!(run_in(a.path(), &args), 0);
    assert_eq!(run_in(b.path(), &args), 0);
    let ra = fs::read(a.path().join("search.json")).unwrap();
    assert_eq!(ra, fs::read(b.path().join("search.json")).unwrap());
    let v: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(v["defect"], v["defect_recomputed"]);
    assert_eq!(manifest(a.path())["params"]["seed"]["source"], "derived");
}

#[test]
fn small_experiments_pass() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run_in(t.path(), &["h3", "--n", "5"]), 0);
    let v: Value = serde_json::from_str(&fs::read_to_string(t.path().join("h3.json")).unwrap()).unwrap();
    assert_eq!(v["minimum"]["fraction"], "2/5");
    assert_eq!(run_in(t.path(), &["padic", "--p", "5", "--r", "2", "--s", "16", "--tuples", "4", "--seed", "9"]), 0);
    assert_eq!(run_in(t.path(), &["sofic-check", "--n", "101", "--m", "3", "--words", "100"]), 0);
}

#[test]
fn binary_propagates_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_soficity");
    let out = t.path().to_str().unwrap();
    let ok = Command::new(bin).args(["heuristic", "--N", "12", "--out", out]).status().unwrap();
    assert_eq!(ok.code(), Some(0));
    let usage = Command::new(bin).args(["heuristic", "--bogus", "--out", out]).status().unwrap();
    assert_eq!(usage.code(), Some(1));
    let failed = Command::new(bin).args(["conjugate", "--n", "500", "--out", out]).status().unwrap();
    assert_eq!(failed.code(), Some(2));
}
