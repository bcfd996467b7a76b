use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glance_core::pose::{project_face, HeadRotation, LandmarkRole, Point2, ReferenceFace};
use serde_json::Value;

fn glance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glance")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "stderr: {text}");
    serde_json::from_str(text.trim_end()).unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn synth(dir: &Path) -> PathBuf {
    ok(glance(&["synth", "--subjects", "6", "--frames", "150", "--seed", "3", "--out", s(dir)]));
    dir.join("dataset.csv")
}

fn write_config(path: &Path, dataset: &Path, extra: &str) {
    let text = format!(
        r#"{{"dataset": {{"file": {:?}}}, "plan": {{"iterations": 3}},
            "params": {{"forest": {{"tree_count": 8}}, "mlp": {{"epochs": 4}}}}{extra}}}"#,
        s(dataset)
    );
    std::fs::write(path, text).unwrap();
}

#[test]
fn missing_dataset_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.json");
    let missing = tmp.path().join("nowhere.csv");
    write_config(&config, &missing, "");
    let out = glance(&["run", s(&config), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "validation");
    assert!(err["message"].as_str().unwrap().contains("nowhere.csv"));
    assert_eq!(err["path"], s(&missing));
}

#[test]
fn usage_and_schema_errors() {
    let out = glance(&["run", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.json");
    std::fs::write(&config, r#"{"dataset": {"file": "d.csv"}, "iteration": 3}"#).unwrap();
    let out = glance(&["run", s(&config), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("iteration"));

    std::fs::write(&config, r#"{"dataset": {"file": "d.csv"}, "params": {"knn": {"k": 2}}}"#).unwrap();
    assert_eq!(glance(&["run", s(&config), "--out", s(tmp.path())]).status.code(), Some(3));
    assert_eq!(glance(&["synth", "--jobs", "0", "--out", s(tmp.path())]).status.code(), Some(2));
}

#[test]
fn run_is_deterministic_across_jobs_and_fills_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(&tmp.path().join("data"));
    let before = std::fs::read(&dataset).unwrap();
    let config = tmp.path().join("c.json");
    write_config(&config, &dataset, "");
    let mut outputs = Vec::new();
    for jobs in ["1", "2", "1"] {
        let dir = tmp.path().join(format!("run-{}", outputs.len()));
        ok(glance(&["run", s(&config), "--jobs", jobs, "--out", s(&dir)]));
        let files: Vec<Vec<u8>> = ["reports.csv", "summary.csv", "summary.txt", "reports.json"]
            .iter()
            .map(|f| std::fs::read(dir.join(f)).unwrap())
            .collect();
        outputs.push((dir, files));
    }
    assert_eq!(outputs[0].1, outputs[1].1);
    assert_eq!(outputs[0].1, outputs[2].1);
    assert_eq!(std::fs::read(&dataset).unwrap(), before);

    let summary = String::from_utf8(outputs[0].1[1].clone()).unwrap();
    let cells = summary.lines().skip(1).flat_map(|l| l.split(',').skip(3)).filter(|c| c.parse::<f64>().is_ok()).count();
    assert_eq!(cells, 24);

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(outputs[0].0.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "run");
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_flag_changes_the_split() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(&tmp.path().join("data"));
    let config = tmp.path().join("c.json");
    write_config(&config, &dataset, r#", "classifiers": ["knn"], "conditions": ["original"]"#);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(glance(&["run", s(&config), "--out", s(&a)]));
    ok(glance(&["run", s(&config), "--seed", "9", "--out", s(&b)]));
    assert_ne!(std::fs::read(a.join("reports.csv")).unwrap(), std::fs::read(b.join("reports.csv")).unwrap());
}

#[test]
fn synth_scenario_file_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    synth(&first);
    let second = tmp.path().join("second");
    ok(glance(&["synth", s(&first.join("scenario.json")), "--out", s(&second)]));
    assert_eq!(std::fs::read(first.join("dataset.csv")).unwrap(), std::fs::read(second.join("dataset.csv")).unwrap());
    let out = glance(&["synth", s(&first.join("scenario.json")), "--profile", "mixed", "--out", s(&second)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pca_and_diffs_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(&tmp.path().join("data"));
    let pca = tmp.path().join("pca");
    ok(glance(&["pca", s(&dataset), "--components", "3", "--iterations", "5", "--out", s(&pca)]));
    let projection = std::fs::read_to_string(pca.join("projection.csv")).unwrap();
    assert!(projection.starts_with("subject_id,glance,pc_1,pc_2,pc_3\n"));
    let components: Value = serde_json::from_str(&std::fs::read_to_string(pca.join("components.json")).unwrap()).unwrap();
    let ratios: f64 = components["explained_variance_ratio"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((ratios - 1.0).abs() < 1e-5);
    assert_eq!(components["monte_carlo"]["runs"], 5);

    let diffs = tmp.path().join("diffs");
    ok(glance(&["diffs", s(&dataset), "--series", "S001", "--min-count", "1", "--out", s(&diffs)]));
    let profiles = std::fs::read_to_string(diffs.join("profiles.csv")).unwrap();
    assert!(profiles.starts_with("subject_id,y_mean_diff,y_range"));
    let series = std::fs::read_to_string(diffs.join("series-S001.csv")).unwrap();
    assert!(series.starts_with("timestamp_ms,rot_y,glance\n"));
    let corr: Value = serde_json::from_str(&std::fs::read_to_string(diffs.join("correlation.json")).unwrap()).unwrap();
    assert!(corr["correlation"]["r"].as_f64().unwrap().abs() <= 1.0);

    let out = glance(&["diffs", s(&dataset), "--series", "nobody", "--out", s(&diffs)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn pose_reduces_landmarks() {
    let tmp = tempfile::tempdir().unwrap();
    let face = ReferenceFace::default();
    let mut text = String::from("frame_id,analyst_id,landmark_role,x_px,y_px,missing_flag\n");
    for frame in 0..4u64 {
        let truth = HeadRotation::new(frame as f64 * 3.0, -20.0 + frame as f64 * 10.0, 1.0);
        let pts = project_face(&face, truth, 90.0, Point2::new(320.0, 240.0));
        for analyst in ["a", "b"] {
            for role in LandmarkRole::ALL {
                let p = pts[role.index()];
                let dx = if frame == 3 && analyst == "b" { 20.0 } else { 0.0 };
                text.push_str(&format!("{frame},{analyst},{},{},{},0\n", role.as_str(), p.x + dx, p.y));
            }
        }
    }
    let landmarks = tmp.path().join("landmarks.csv");
    std::fs::write(&landmarks, text).unwrap();
    let out = tmp.path().join("pose");
    ok(glance(&["pose", s(&landmarks), "--out", s(&out)]));
    let rotations = std::fs::read_to_string(out.join("rotations.csv")).unwrap();
    let lines: Vec<&str> = rotations.lines().collect();
    assert_eq!(lines[0], "frame_id,rot_x,rot_y,rot_z");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1], "0,0.000000,-20.000000,1.000000");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("reduction.json")).unwrap()).unwrap();
    assert_eq!(summary["merged"], 3);
    assert_eq!(summary["excluded_disagreement"], 1);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            glance_core::cli::load_experiment_config(&path).unwrap_or_else(|e| panic!("{}: {}", path.display(), e.message));
            n += 1;
        }
    }
    assert!(n >= 2);
}
