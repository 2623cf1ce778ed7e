use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_urbandrive"))
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn aggregate_score(dir: &std::path::Path) -> f64 {
    let text = std::fs::read_to_string(dir.join("aggregate.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["driving_score"].as_f64().unwrap()
}

#[test]
fn run_clean_scenario() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--seed", "1", "--scenario"])
        .arg(scenarios().join("empty_road.json"))
        .arg("--config")
        .arg(scenarios().join("default.toml"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,theta,v,a,s,d,selected_cost,n_candidates,n_collision_free,mode\n"));
    assert!(out.path().join("metrics.json").exists());
}

#[test]
fn run_without_config_uses_defaults() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--scenario"])
        .arg(scenarios().join("empty_road.json"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn run_missing_scenario_exits_1() {
    let out = tempfile::tempdir().unwrap();
    let res = bin()
        .args(["run", "--scenario", "/nonexistent/scenario.json", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nonexistent"));
}

#[test]
fn run_collision_exits_2_with_metrics() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--scenario"])
        .arg(scenarios().join("sudden_barrier.json"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let text = std::fs::read_to_string(out.path().join("metrics.json")).unwrap();
    assert!(text.contains("collision_layout"));
}

#[test]
fn fan_counts() {
    let out = tempfile::tempdir().unwrap();
    for (mode, start, n) in [("velocity", "5", 80), ("lateral", "0", 112)] {
        let file = out.path().join(format!("{mode}.csv"));
        let res = bin()
            .args(["fan", "--mode", mode, "--start", start, "--out"])
            .arg(&file)
            .output()
            .unwrap();
        assert_eq!(res.status.code(), Some(0));
        assert_eq!(String::from_utf8_lossy(&res.stdout).trim(), format!("candidates={n}"));
        let mut r = csv::Reader::from_path(&file).unwrap();
        let ids: std::collections::BTreeSet<String> = r.records().map(|rec| rec.unwrap()[0].to_string()).collect();
        assert_eq!(ids.len(), n);
    }
}

#[test]
fn suite_clean_scores_100() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["suite", "--manifest"])
        .arg(scenarios().join("suite_clean.json"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(aggregate_score(out.path()), 100.0);
    assert!(out.path().join("route_02/metrics.json").exists());
}

#[test]
fn suite_mixed_scores_85() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["suite", "--manifest"])
        .arg(scenarios().join("suite_mixed.json"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!((aggregate_score(out.path()) - 85.0).abs() < 1e-9);
    let table = std::fs::read_to_string(out.path().join("aggregate.csv")).unwrap();
    assert!(table.lines().next().unwrap().contains("red_light_per_km"));
}

#[test]
fn suite_empty_manifest_exits_1() {
    let out = tempfile::tempdir().unwrap();
    let manifest = out.path().join("empty.json");
    std::fs::write(&manifest, r#"{"routes": []}"#).unwrap();
    let status = bin()
        .args(["suite", "--manifest"])
        .arg(&manifest)
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn reruns_write_identical_files() {
    let run = |dir: &std::path::Path| {
        let status = bin()
            .args(["run", "--seed", "9", "--scenario"])
            .arg(scenarios().join("noisy_empty_road.json"))
            .arg("--out")
            .arg(dir)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        (
            std::fs::read(dir.join("metrics.json")).unwrap(),
            std::fs::read(dir.join("trajectory.csv")).unwrap(),
        )
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(a.path()), run(b.path()));
}
