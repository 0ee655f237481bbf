use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridlearn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn split(dir: &Path, train: usize) {
    fs::create_dir_all(dir.join("train")).unwrap();
    fs::create_dir_all(dir.join("test")).unwrap();
    let mut names: Vec<_> = fs::read_dir(dir.join("all"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    for (k, p) in names.iter().enumerate() {
        let sub = if k < train { "train" } else { "test" };
        fs::copy(p, dir.join(sub).join(p.file_name().unwrap())).unwrap();
    }
}

#[test]
fn learn_then_eval_prints_one_cost_line() {
    let d = tempfile::tempdir().unwrap();
    ok(
        &["gen", "thermostat", "--n", "6", "--seed", "4", "--out", "all"],
        d.path(),
    );
    split(d.path(), 4);
    ok(
        &["learn", "--traces", "train", "--cost", "linear", "--out", "m.json"],
        d.path(),
    );
    let cost = ok(&["eval", "--model", "m.json", "--traces", "test"], d.path());
    let lines: Vec<&str> = cost.lines().collect();
    assert_eq!(lines.len(), 1);
    let v: f64 = lines[0].parse().unwrap();
    assert!((0.0..0.05).contains(&v), "{v}");
}

#[test]
fn generation_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    ok(&["gen", "polyplant", "--n", "2", "--seed", "9", "--out", "a"], d.path());
    ok(&["gen", "polyplant", "--n", "2", "--seed", "9", "--out", "b"], d.path());
    for f in ["trace_000.csv", "trace_001.csv"] {
        assert_eq!(
            fs::read(d.path().join("a").join(f)).unwrap(),
            fs::read(d.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn missing_input_exits_2_without_output() {
    let d = tempfile::tempdir().unwrap();
    let out = run(&["learn", "--traces", "nowhere", "--out", "m.json"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.path().join("m.json").exists());
    assert!(!out.stderr.is_empty());
    let out = run(&["eval", "--model", "absent.json", "--traces", "."], d.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    ok(&["gen", "thermostat", "--n", "1", "--out", "t"], d.path());
    let bad = run(
        &["learn", "--traces", "t", "--diag-threshold", "1.5", "--out", "m.json"],
        d.path(),
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(!d.path().join("m.json").exists());
    assert_eq!(run(&["learn", "--bogus"], d.path()).status.code(), Some(1));
    assert_eq!(run(&[], d.path()).status.code(), Some(1));
    fs::write(d.path().join("junk.json"), "{\"version\": 99}").unwrap();
    assert_eq!(
        run(&["export", "--model", "junk.json"], d.path()).status.code(),
        Some(1)
    );
}

#[test]
fn resume_rejects_conflicting_flags() {
    let d = tempfile::tempdir().unwrap();
    ok(&["gen", "thermostat", "--n", "2", "--out", "t"], d.path());
    ok(
        &["learn", "--traces", "t", "--cost", "linear", "--out", "m.json"],
        d.path(),
    );
    let out = run(
        &[
            "learn", "--resume", "m.json", "--traces", "t", "--window", "30", "--out", "n.json",
        ],
        d.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--window"));
    // Repeating the stored value is not a conflict.
    ok(
        &[
            "learn", "--resume", "m.json", "--traces", "t", "--cost", "linear", "--out", "n.json",
        ],
        d.path(),
    );
}

#[test]
fn export_simulate_segment_freq_and_dtw() {
    let d = tempfile::tempdir().unwrap();
    ok(
        &["gen", "thermostat", "--n", "3", "--seed", "1", "--out", "t"],
        d.path(),
    );
    ok(
        &["learn", "--traces", "t", "--cost", "linear", "--out", "m.json"],
        d.path(),
    );

    let dot = ok(&["export", "--model", "m.json", "--format", "dot"], d.path());
    assert!(dot.starts_with("digraph"));
    ok(
        &["export", "--model", "m.json", "--format", "json", "--out", "plain.json"],
        d.path(),
    );
    let plain = fs::read_to_string(d.path().join("plain.json")).unwrap();
    assert!(!plain.contains("\"learner\""));

    let src = fs::read_to_string(d.path().join("t/trace_000.csv")).unwrap();
    let inputs: String = src
        .lines()
        .map(|l| format!("{}\n", l.split(',').next().unwrap()))
        .collect();
    fs::write(d.path().join("inputs.csv"), inputs).unwrap();
    ok(
        &[
            "simulate",
            "--model",
            "m.json",
            "--input",
            "inputs.csv",
            "--out",
            "sim.csv",
        ],
        d.path(),
    );
    let sim = fs::read_to_string(d.path().join("sim.csv")).unwrap();
    assert_eq!(sim.lines().count(), src.lines().count());
    assert_eq!(sim.lines().next(), src.lines().next());

    let cps = ok(
        &[
            "segment",
            "--input",
            "t/trace_000.csv",
            "--cost",
            "linear",
            "--segments-dir",
            "segs",
        ],
        d.path(),
    );
    let v: serde_json::Value = serde_json::from_str(&cps).unwrap();
    let points = v.as_array().unwrap();
    assert!(!points.is_empty());
    assert!(points
        .iter()
        .all(|p| p.get("index").is_some() && p.get("time").is_some() && p.get("discrepancy").is_some()));
    let segs = fs::read_dir(d.path().join("segs")).unwrap().count();
    assert_eq!(segs, points.len() + 1);

    let sim = ok(&["dtw", "--a", "segs/seg_001.csv", "--b", "segs/seg_003.csv"], d.path());
    let v: serde_json::Value = serde_json::from_str(&sim).unwrap();
    assert!(v["distance"].as_f64().unwrap() >= 0.0);
    assert!(v["diagonality"].as_f64().unwrap().abs() <= 1.0);

    let mut wave = String::from("t,i:u,o:y\n");
    for k in 0..400 {
        wave.push_str(&format!("{},{},0\n", k as f64 * 0.01, u8::from(k % 20 < 10)));
    }
    fs::write(d.path().join("wave.csv"), wave).unwrap();
    ok(
        &["freq", "--input", "wave.csv", "--window", "100", "--out", "f.csv"],
        d.path(),
    );
    let f = fs::read_to_string(d.path().join("f.csv")).unwrap();
    let row = f.lines().nth(50).unwrap();
    let hz: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((hz - 5.0).abs() < 0.25, "{hz}");
}

#[test]
fn help_documents_defaults() {
    let d = tempfile::tempdir().unwrap();
    let help = ok(&["learn", "--help"], d.path());
    for needle in [
        "[default: 0.1]",
        "[default: 0.8]",
        "[default: 20]",
        "[default: 2]",
        "[default: l2]",
    ] {
        assert!(help.contains(needle), "missing {needle}");
    }
}
