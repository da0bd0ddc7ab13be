use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn vidqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidqa"))
        .current_dir(dir)
        .env_remove("VIDQA_CONFIG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn agent(id: &str, answer: &str) -> Value {
    json!({
        "kind": "scripted",
        "id": id,
        "entries": [
            {"capability": "clue", "output": "find the red scene"},
            {"capability": "act", "output": format!("Answer: {answer}")},
            {"capability": "reason", "output": format!("{id} picked {answer}")},
            {"capability": "eval", "output": "Agent 1: 6\nAgent 2: 6\nAgent 3: 6"},
            {"capability": "refine", "output": "refined"},
            {"capability": "summarize", "output": "summary"}
        ]
    })
}

fn video() -> Value {
    json!({"id": "clip", "duration": 60.0, "frames": 60, "cuts": [20.0, 40.0]})
}

fn write_fixture(dir: &Path, answers: [&str; 3]) {
    let questions: Vec<Value> = (0..3)
        .map(|i| {
            json!({
                "id": format!("q{i}"),
                "video": video(),
                "question": "What colour is the middle scene?",
                "options": ["red", "green", "blue", "white"],
                "gold": "A"
            })
        })
        .collect();
    fs::write(dir.join("manifest.json"), json!({"questions": questions}).to_string()).unwrap();
    let agents: Vec<Value> = answers
        .iter()
        .enumerate()
        .map(|(i, a)| agent(&format!("agent{i}"), a))
        .collect();
    fs::write(dir.join("library.json"), json!({"agents": agents}).to_string()).unwrap();
}

#[test]
fn config_echo_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = vidqa(dir.path(), &["config", "--seed", "42", "--n2", "8", "--no-prune", "maj"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 42"), "{text}");
    assert!(text.contains("n2 = 8"), "{text}");
    assert!(text.contains("no-prune-maj"), "{text}");
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "workers = 2\n[deliberation]\nseed = 5\nn1 = 3\n").unwrap();
    let out = vidqa(dir.path(), &["--config", "run.toml", "config", "--seed", "9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("workers = 2"));
    assert!(text.contains("n1 = 3"));
    assert!(text.contains("seed = 9"));
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = vidqa(dir.path(), &["config", "--rho", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(dir.path().join("bad.toml"), "workers = \"many\"").unwrap();
    let out = vidqa(dir.path(), &["--config", "bad.toml", "config"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn partition_synthetic_video() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("clip.json"), video().to_string()).unwrap();
    let out = vidqa(
        dir.path(),
        &["partition", "clip.json", "--out", "b.json", "--novelty-csv", "n.csv", "--candidates-csv", "c.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("b.json")).unwrap()).unwrap();
    let b: Vec<f64> = doc["boundaries"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(b[0], 0.0);
    assert_eq!(*b.last().unwrap(), 60.0);
    assert!(b.len() >= 3 && b.len() <= 7);
    assert_eq!(doc["heads"].as_array().unwrap().len(), b.len() - 2);
    assert!(fs::read_to_string(dir.path().join("n.csv")).unwrap().lines().count() > 10);
    assert!(dir.path().join("c.csv").exists());
}

#[test]
fn partition_missing_video_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = vidqa(dir.path(), &["partition", "nothing-here"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn team_then_run() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), ["A", "A", "A"]);
    let out = vidqa(
        dir.path(),
        &["team", "--manifest", "manifest.json", "--library", "library.json", "-m", "2", "--out", "team.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let team: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("team.json")).unwrap()).unwrap();
    assert_eq!(team["selected"].as_array().unwrap().len(), 2);

    let out = vidqa(
        dir.path(),
        &[
            "run", "--manifest", "manifest.json", "--library", "library.json", "--teaming", "team.json",
            "--out", "traces.jsonl", "--summary", "summary.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["accuracy"].as_f64(), Some(1.0));
    let traces = fs::read_to_string(dir.path().join("traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 3);
    for line in traces.lines() {
        let t: Value = serde_json::from_str(line).unwrap();
        assert_eq!(t["final_answer"], "A");
        assert_eq!(t["pool"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn sequential_and_parallel_runs_match() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), ["A", "B", "C"]);
    let base = ["run", "--manifest", "manifest.json", "--library", "library.json", "--summary", "s.json"];
    let seq = vidqa(dir.path(), &[&base[..], &["--out", "seq.jsonl", "--sequential"]].concat());
    let par = vidqa(dir.path(), &[&base[..], &["--out", "par.jsonl", "--workers", "3"]].concat());
    assert!(seq.status.success() && par.status.success());
    let a = fs::read(dir.path().join("seq.jsonl")).unwrap();
    let b = fs::read(dir.path().join("par.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn missing_manifest_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = vidqa(dir.path(), &["run", "--manifest", "none.json", "--library", "none.json", "--out", "t.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn replay_prints_trace() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = json!({
        "question": {
            "id": "r1", "video": video(), "question": "Which scene is red?",
            "options": ["first", "second", "third"]
        },
        "agents": [agent("a", "B"), agent("b", "B"), agent("c", "B")]
    });
    fs::write(dir.path().join("scenario.json"), scenario.to_string()).unwrap();
    let out = vidqa(dir.path(), &["replay", "scenario.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t: Value = serde_json::from_str(String::from_utf8(out.stdout).unwrap().trim()).unwrap();
    assert_eq!(t["final_answer"], "B");
    assert_eq!(t["rounds"].as_array().unwrap().len(), 1);
}
