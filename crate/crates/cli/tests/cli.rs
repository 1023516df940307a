use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn smpctl(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smpctl"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("SMPCTL_OUT_DIR")
        .output()
        .expect("spawn smpctl")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn f(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpctl(dir.path(), &["validate", &f("benchmark_model.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&dir.path().join("validation.json"));
    assert_eq!(v["ok"], Value::Bool(true));
    assert_eq!(v["vertex_count"], 9);
}

#[test]
fn validate_names_the_bad_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpctl(dir.path(), &["validate", &f("asymmetric_model.json")]);
    assert_eq!(code(&o), 1);
    let v = read_json(&dir.path().join("validation.json"));
    assert_eq!(v["ok"], Value::Bool(false));
    let field = v["issues"][0]["field"].as_str().unwrap();
    assert!(field.contains("vertices[0][0][1]"), "{field}");
}

#[test]
fn empty_model_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    let o = smpctl(dir.path(), &["validate", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("empty.json"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&smpctl(dir.path(), &["frobnicate"])), 1);
}

#[test]
fn certify_designed_and_zero_gain() {
    let dir = tempfile::tempdir().unwrap();
    let model = f("benchmark_model.json");
    let o = smpctl(dir.path(), &["certify", &model, "--gain", &f("designed_gain.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("certificate.json").exists());

    let o = smpctl(dir.path(), &["certify", &model, "--gain", &f("zero_gain.json")]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = smpctl(dir.path(), &["certify", &model, "--gain", &f("zero_gain.json"), "--beta", "1.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn synthesize_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpctl(dir.path(), &["synthesize", &f("benchmark_model.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = std::fs::read_to_string(dir.path().join("eps_trace.csv")).unwrap();
    let eps: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(eps.len() >= 2);
    assert!(eps.last().unwrap() < &1e-6);
    assert!(eps.last().unwrap() < &eps[0]);

    let o = smpctl(
        dir.path(),
        &["certify", &f("benchmark_model.json"), "--gain", dir.path().join("gain.json").to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn synthesize_negative_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpctl(dir.path(), &["synthesize", &f("uncontrollable_model.json")]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = smpctl(dir.path(), &["synthesize", &f("benchmark_model.json"), "--max-iter", "1"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

fn decay(dir: &Path) -> f64 {
    read_json(&dir.join("decay.json"))["fit"]["beta_hat"].as_f64().unwrap()
}

#[test]
fn simulate_open_and_closed_loop() {
    let open = tempfile::tempdir().unwrap();
    let closed = tempfile::tempdir().unwrap();
    let model = f("benchmark_model.json");
    let dist = f("benchmark_distribution.json");
    let common = ["--paths", "2000", "--seed", "3", "--no-paths"];
    let mut args = vec!["simulate", model.as_str(), dist.as_str()];
    args.extend(common);
    let o = smpctl(open.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let gain = f("designed_gain.json");
    args.extend(["--gain", gain.as_str()]);
    let o = smpctl(closed.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(decay(open.path()) > 1.0);
    assert!(decay(closed.path()) < 0.97);
    assert!(!closed.path().join("trajectories.csv").exists());
    let summary = std::fs::read_to_string(closed.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 32);
}

#[test]
fn manifest_replay_reproduces_paths() {
    let dir = tempfile::tempdir().unwrap();
    let model = f("benchmark_model.json");
    let dist = f("benchmark_distribution.json");
    let o = smpctl(
        dir.path(),
        &["simulate", &model, &dist, "--paths", "3", "--seed", "9", "--theta", "random:4", "-T", "12"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = dir.path().join("manifest-simulate.json");
    let m = read_json(&manifest);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["exit_code"], 0);
    let before = std::fs::read(dir.path().join("trajectories.csv")).unwrap();
    std::fs::remove_file(dir.path().join("trajectories.csv")).unwrap();

    let other = tempfile::tempdir().unwrap();
    let o = smpctl(other.path(), &["replay", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let after = std::fs::read(dir.path().join("trajectories.csv")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn reproduce_is_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    for d in [&a, &b] {
        let o = smpctl(root.path(), &["reproduce", d.to_str().unwrap(), "--seed", "11"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    }
    for name in ["controlled/summary.csv", "uncontrolled/summary.csv", "theorem_check.csv", "synthesis/gain.json"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let acc = read_json(&a.join("acceptance.json"));
    for c in acc["criteria"].as_array().unwrap() {
        assert_eq!(c["pass"], Value::Bool(true), "{c}");
    }
}

#[test]
fn reproduce_stops_at_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rep");
    let o = smpctl(
        dir.path(),
        &["reproduce", out.to_str().unwrap(), "--model", &f("asymmetric_model.json"), "--paths", "100"],
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("stage `validate` failed"), "{}", stderr(&o));
    assert!(!out.join("certificate.json").exists());
}
