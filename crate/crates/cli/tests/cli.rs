use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn drivesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drivesim")).args(args).output().expect("spawn")
}

fn synth_bench(dir: &Path) -> String {
    let out = drivesim(&["synth", "--kind", "corridor", "--vehicles", "6", "--road-points", "900", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("corridor_6.json").to_str().unwrap().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn validate_reports_schema_failures_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    synth_bench(dir.path());
    std::fs::write(dir.path().join("broken.json"), br#"{"name": "b", "dt": 0.1, "objects": [], "roads": [{"type": "lane", "geometry": [{"x": 1}]}]}"#).unwrap();
    let out = drivesim(&["validate", "--scenarios", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema_failures"], 1);
    let err = v["files"][0]["error"].as_str().unwrap();
    assert!(err.contains("roads[0].geometry[0]"), "{err}");
    assert_eq!(v["files"][1]["ok"], true);
}

#[test]
fn rollout_writes_to_out_and_no_removal_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_bench(dir.path());
    let out_path = dir.path().join("report.json");
    let out = drivesim(&["rollout", "--scenarios", &scene, "--policy", "constant(0,0)", "--no-removal", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out_path).unwrap()).unwrap();
    assert_eq!(v["removal"], false);
    assert_eq!(v["episodes"][0]["steps"], 90);
    assert_eq!(v["controlled"]["vehicles"], 6);
}

#[test]
fn rollout_stdin_policy_reads_one_line_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_bench(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_drivesim"))
        .args(["rollout", "--scenarios", &scene, "--policy", "stdin"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        for _ in 0..80 {
            writeln!(stdin, r#"{{"0": "expert", "1": {{"accel": 0.0, "steer": 0.0}}, "2": "expert", "3": "expert", "4": "expert", "5": "expert"}}"#).unwrap();
        }
    }
    let v = json(&child.wait_with_output().unwrap());
    let vehicles = v["episodes"][0]["vehicles"].as_array().unwrap();
    let v0 = vehicles.iter().find(|r| r["id"] == 0).unwrap();
    assert_eq!(v0["ade"], 0.0);
    assert_eq!(v0["goal"], true);
}

#[test]
fn rollout_stdin_policy_fails_on_short_input() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_bench(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_drivesim"))
        .args(["rollout", "--scenarios", &scene, "--policy", "stdin"])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    writeln!(child.stdin.as_mut().unwrap(), r#"{{"0": "expert", "1": "expert", "2": "expert", "3": "expert", "4": "expert", "5": "expert"}}"#).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ended at step 11"));
}

#[test]
fn unknown_policy_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_bench(dir.path());
    let out = drivesim(&["rollout", "--scenarios", &scene, "--policy", "greedy"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_writes_png_and_rejects_absent_ego() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_bench(dir.path());
    let png = dir.path().join("v.png");
    let out = drivesim(&["render", "--scenario", &scene, "--ego", "2", "--view", "full", "--size", "64", "--out", png.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&png).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
    let out = drivesim(&["render", "--scenario", &scene, "--ego", "99", "--out", png.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vehicle 99"));
}

#[test]
fn config_round_trips_and_exposes_layout() {
    let dir = tempfile::tempdir().unwrap();
    let preset = drivesim(&["config"]);
    let v = json(&preset);
    assert_eq!(v["observation_layout"]["dimension"], 5675);
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, &preset.stdout).unwrap();
    let again = drivesim(&["config", "--config", path.to_str().unwrap()]);
    assert_eq!(preset.stdout, again.stdout);
    std::fs::write(&path, br#"{"sim": {"horizon": "long"}}"#).unwrap();
    let bad = drivesim(&["config", "--config", path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bench_reports_per_repeat_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    synth_bench(dir.path());
    let v = json(&drivesim(&["bench", "--scenarios", dir.path().to_str().unwrap(), "--mode", "single", "--repeats", "3", "--seed", "1"]));
    assert_eq!(v["repeats"], 3);
    assert_eq!(v["sps_per_repeat"].as_array().unwrap().len(), 3);
    assert_eq!(v["curve"][0]["agents"], 6);
    let empty = tempfile::tempdir().unwrap();
    let out = drivesim(&["bench", "--scenarios", empty.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hard_left_in_a_corridor_hits_the_road_edge() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_bench(dir.path());
    let v = json(&drivesim(&["rollout", "--scenarios", &scene, "--policy", "constant(0,0.7)"]));
    let rows = v["episodes"][0]["vehicles"].as_array().unwrap();
    assert!(rows.iter().filter(|r| r["role"] == "controlled").all(|r| r["collision"] == "road_edge"), "{rows:?}");
    assert_eq!(v["controlled"]["road_edge_collision_rate"], 1.0);
}
