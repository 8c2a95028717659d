use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn three_pop() -> PathBuf {
    data("three_pop.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetroute")).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], jobs: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetroute"))
        .args(args)
        .env("HETROUTE_JOBS", jobs)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn flows(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .flat_map(|pop| pop["flows"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
        .collect()
}

#[test]
fn routes_lists_enumeration_order() {
    let v = ok_json(&["routes", p(&three_pop())]);
    let pops = v.as_array().unwrap();
    assert_eq!(pops.len(), 3);
    assert_eq!(pops[0]["routes"][0]["links"], "e1-e2");
    assert_eq!(pops[0]["routes"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_at_huge_noise_converges_to_uniform() {
    let v = ok_json(&["simulate", p(&three_pop()), "--eta", "1e6", "--t", "50", "--z0", "uniform"]);
    assert_eq!(v["converged"], true);
    let z = flows(&v["final_z"]);
    let uniform = [[0.3; 4].as_slice(), &[0.25; 8]].concat();
    let d: f64 = z.iter().zip(&uniform).map(|(a, b)| (a - b).abs()).sum();
    assert!(d < 1e-3, "{d}");
}

#[test]
fn simulate_small_noise_depends_on_start() {
    let a = ok_json(&["simulate", p(&three_pop()), "--eta", "0.1", "--t", "200", "--z0", "vertex:0"]);
    let b = ok_json(&["simulate", p(&three_pop()), "--eta", "0.1", "--t", "200", "--z0", "vertex:3"]);
    let (za, zb) = (flows(&a["final_z"]), flows(&b["final_z"]));
    let d: f64 = za.iter().zip(&zb).map(|(x, y)| (x - y).abs()).sum();
    assert!(d > 1.0, "{d}");
    // Explicit per-population choice spells out the same start.
    let c = ok_json(&["simulate", p(&three_pop()), "--eta", "0.1", "--t", "200", "--z0", "vertex:3,3,3"]);
    assert_eq!(flows(&c["final_z"]), zb);
}

#[test]
fn simulate_writes_csv_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok_json(&["simulate", p(&three_pop()), "--eta", "1", "--t", "1", "--out", p(&out)]);
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,pop,route,flow\n"));
    assert!(!csv.contains('\r'));
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("t,route,flow\n"));
    let side: Value = serde_json::from_str(&std::fs::read_to_string(out.join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(side["integrator"]["method"], "rk4");
}

#[test]
fn missing_file_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let r = run(&["simulate", "no/such/game.json", "--eta", "1", "--t", "1", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
    assert!(r.stdout.is_empty());
    assert!(!r.stderr.is_empty());
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["fixed-points", p(&three_pop()), "--eta", "0"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", p(&three_pop()), "--eta", "1"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", p(&three_pop()), "--eta", "1", "--t", "1", "--z0", "vertex:9"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", p(&three_pop()), "--coord", "f:nope"]).status.code(), Some(2));
    // Step-size underflow is a numerical failure.
    let r = run(&["simulate", p(&three_pop()), "--eta", "0.1", "--t", "1", "--adaptive", "1e-300"]);
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(run_env(&["routes", p(&three_pop())], "0").status.code(), Some(2));
}

#[test]
fn fixed_points_below_and_above_the_bifurcation() {
    let v = ok_json(&["fixed-points", p(&three_pop()), "--eta", "0.1", "--starts", "64", "--seed", "7"]);
    let recs = v.as_array().unwrap();
    assert_eq!(recs.len(), 3);
    let stable = recs.iter().filter(|r| r["stability"] == "stable").count();
    let unstable = recs.iter().filter(|r| r["stability"] == "unstable").count();
    assert_eq!((stable, unstable), (2, 1));
    for r in recs {
        assert!(r["residual"].as_f64().unwrap() < 1e-10);
        assert!(r["eigenvalues"].as_array().unwrap().iter().all(|e| e.get("re").is_some() && e.get("im").is_some()));
    }

    let v = ok_json(&["fixed-points", p(&three_pop()), "--eta", "2.0"]);
    let recs = v.as_array().unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["stability"], "stable");
}

#[test]
fn output_is_independent_of_worker_count() {
    let game = three_pop();
    let args = ["fixed-points", p(&game), "--eta", "0.1", "--starts", "16", "--seed", "3"];
    let a = run_env(&args, "1");
    let b = run_env(&args, "4");
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_finds_the_bifurcation_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let game = three_pop();
    let args =
        ["sweep", p(&game), "--eta-max", "1", "--eta-min", "0.01", "--points", "60", "--coord", "f:e1", "--out", p(&out)];
    ok_json(&args);
    let events: Value = serde_json::from_str(&std::fs::read_to_string(out.join("events.json")).unwrap()).unwrap();
    let events = events.as_array().unwrap();
    assert_eq!(events.len(), 1);
    let (lo, hi) = (events[0]["eta_lo"].as_f64().unwrap(), events[0]["eta_hi"].as_f64().unwrap());
    assert!(lo <= hi && hi >= 0.28 && lo <= 0.34, "[{lo}, {hi}]");
    let csv = std::fs::read_to_string(out.join("diagram.csv")).unwrap();
    assert!(csv.starts_with("eta,branch,stability,coord_name,value\n"));
    assert!(csv.lines().nth(1).unwrap().contains(",f:e1,"));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(manifest["branches"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["grid"].as_array().unwrap().len(), 60);
}

#[test]
fn sweep_on_constant_delays_is_eventless_and_clamps_eta_min() {
    let r = run(&["sweep", p(&data("constant.json")), "--eta-min", "1e-6", "--points", "10"]);
    assert!(r.status.success());
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("warning") && stderr.contains("0.005"), "{stderr}");
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["eta_min"].as_f64(), Some(0.005));
    assert!(v["events"].as_array().unwrap().is_empty());
}

#[test]
fn certify_large_and_small_noise() {
    let v = ok_json(&["certify", p(&three_pop()), "--eta", "1e6"]);
    assert_eq!(v["valid"], true);
    assert!(v["margin_c"].as_f64().unwrap() >= 0.99);
    let v = ok_json(&["certify", p(&three_pop()), "--eta", "0.1"]);
    assert_eq!(v["valid"], false);
    let v = ok_json(&["certify", "--threshold", p(&three_pop())]);
    assert_eq!(v["sampled"], true);
    assert!(v["eta_hat"].as_f64().unwrap() > 0.0);
}

#[test]
fn certify_checks_trajectory_pairs() {
    let v = ok_json(&["certify", p(&three_pop()), "--eta", "1e6", "--pairs", "5", "--t", "5"]);
    assert_eq!(v["trajectory_check"]["holds"], true);
    assert_eq!(v["trajectory_check"]["pairs"], 5);
}

#[test]
fn wardrop_reports() {
    let check = |f: &str| ok_json(&["wardrop", p(&three_pop()), p(&data(&format!("flows/{f}")))]);
    for f in ["three_pop_eq1.json", "three_pop_eq2.json"] {
        let v = check(f);
        assert_eq!((v["wardrop"].as_bool(), v["strict"].as_bool()), (Some(true), Some(true)), "{f}");
    }
    let v = check("three_pop_eq3.json");
    assert_eq!((v["wardrop"].as_bool(), v["strict"].as_bool()), (Some(true), Some(false)));
    let v = check("three_pop_uniform.json");
    assert_eq!(v["wardrop"], false);
    let named: Vec<&Value> =
        v["populations"].as_array().unwrap().iter().map(|p| &p["violating_route"]).filter(|r| !r.is_null()).collect();
    assert!(!named.is_empty());
    assert!(named.iter().all(|r| r["links"].as_str().unwrap().contains('-')));
}

#[test]
fn potential_on_toll_and_asymmetric_games() {
    let v = ok_json(&["potential", p(&data("toll2.json"))]);
    assert_eq!(v["symmetric"], true);
    assert_eq!(v["lyapunov"]["non_increasing"], true);
    assert!(v["minimizer"]["distance_to_fixed_point"].as_f64().unwrap() < 1e-6);

    let v = ok_json(&["potential", p(&three_pop())]);
    assert_eq!(v["symmetric"], false);
    let w = &v["worst"];
    assert!(w["p"].is_string() && w["q"].is_string() && w["i"].is_u64() && w["j"].is_u64());
    assert!(v["worst_violation"].as_f64().unwrap() > 0.0);
}

#[test]
fn zero_tolls_leave_only_the_beckmann_term() {
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(data("toll2.json")).unwrap()).unwrap();
    for t in doc["tolls"].as_object_mut().unwrap().values_mut() {
        *t = Value::from(0.0);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("untolled.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let v = ok_json(&["potential", p(&path)]);
    let parts = &v["potential_at_final_state"];
    assert_eq!(parts["toll"].as_f64(), Some(0.0));
    assert_eq!(parts["beckmann"], parts["v"]);
}

#[test]
fn agents_track_the_ode() {
    let v = ok_json(&["agents", p(&three_pop()), "--eta", "0.5", "--n", "10000", "--seed", "1", "--t", "10", "--compare"]);
    let d = v["sup_distance"].as_f64().unwrap();
    assert!(d <= 0.15, "{d}");
}

#[test]
fn agents_are_reproducible_and_validate_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok_json(&["agents", p(&three_pop()), "--eta", "0.5", "--n", "200,300,400", "--seed", "9", "--t", "2", "--out", p(out)]);
    }
    let (ca, cb) = (std::fs::read(a.join("agents.csv")).unwrap(), std::fs::read(b.join("agents.csv")).unwrap());
    assert_eq!(ca, cb);
    assert!(String::from_utf8(ca).unwrap().starts_with("seed,N,t,pop,route,flow\n9,200,"));

    assert_eq!(run(&["agents", p(&three_pop()), "--eta", "0.5", "--n", "0", "--t", "1"]).status.code(), Some(2));
    assert_eq!(run(&["agents", p(&three_pop()), "--eta", "0.5", "--n", "5,5", "--t", "1"]).status.code(), Some(2));
}
