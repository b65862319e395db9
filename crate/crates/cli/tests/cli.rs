use std::path::Path;
use std::process::{Command, Output};

fn reform(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reform"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Generates a small database and config in `dir`.
fn setup(dir: &Path) {
    std::fs::write(dir.join("cfg.json"), r#"{"samples_per_part": 300, "clusters": 24}"#).unwrap();
    let o = reform(dir, &["--config", "cfg.json", "gen-db", "--counts", "6,4,3,3", "--scale", "1", "--obj", "--out", "gen"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = reform(dir, &["--config", "cfg.json", "build-db", "--models", "gen/models.json", "--out", "db.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

const CHAIR: [&str; 4] = ["--model", "gen/chair_000.obj", "--materials", "gen/chair_000.materials.json"];

#[test]
fn pipeline_and_stage_chain_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);

    let mut args = vec!["--config", "cfg.json", "pipeline"];
    args.extend(CHAIR);
    args.extend(["--db", "db.json", "--target-material", "all=metal", "--out", "full"]);
    let o = reform(dir, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&reform(dir, &["validate", "--spec", "full/spec/spec.json"])), 0);

    let mut args = vec!["--config", "cfg.json", "reform"];
    args.extend(CHAIR);
    args.extend(["--db", "db.json", "--target-material", "all=metal", "--out", "steps"]);
    assert_eq!(code(&reform(dir, &args)), 0);
    for stage in ["restore", "optimize-angles", "infer-joints", "refine", "form-joints"] {
        let o = reform(dir, &[stage, "--state", "steps/state.json", "--db", "db.json", "--out", "steps"]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let full = std::fs::read_to_string(dir.join("full/spec/spec.json")).unwrap();
    let steps = std::fs::read_to_string(dir.join("steps/spec/spec.json")).unwrap();
    assert_eq!(full, steps);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);

    // Input errors.
    assert_eq!(code(&reform(dir, &["refine", "--state", "missing.json", "--out", "x"])), 2);
    assert_eq!(code(&reform(dir, &["suggest", "--model", "gen/chair_000.obj", "--out", "x"])), 2);
    assert_eq!(code(&reform(dir, &["pipeline", "--model", "gen/chair_000.obj", "--db", "db.json", "--target-material", "0=plastic", "--out", "x"])), 2);
    assert_eq!(code(&reform(dir, &["validate", "--spec", "nothing.json"])), 2);
    let mut args = vec!["--config", "cfg.json", "suggest"];
    args.extend(CHAIR);
    args.extend(["--db", "db.json", "--out", "s"]);
    assert_eq!(code(&reform(dir, &args)), 0);
    assert_eq!(code(&reform(dir, &["refine", "--state", "s/state.json", "--out", "s"])), 2);

    // A wood-wood override on a metal contact fails joint inference.
    let mut args = vec!["--config", "cfg.json", "pipeline"];
    args.extend(CHAIR);
    args.extend(["--db", "db.json", "--target-material", "all=metal", "--out", "ok"]);
    assert_eq!(code(&reform(dir, &args)), 0);
    let spec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("ok/spec/spec.json")).unwrap()).unwrap();
    let j = &spec["joints"][0];
    let over = format!("{},{}=mortise-tenon", j["i"], j["j"]);
    let mut args = vec!["--config", "cfg.json", "pipeline"];
    args.extend(CHAIR);
    args.extend(["--db", "db.json", "--target-material", "all=metal", "--joint-override", &over, "--out", "bad"]);
    let o = reform(dir, &args);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("infer-joints"));
}

#[test]
fn ingest_reports_structure() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    let mut args = vec!["ingest"];
    args.extend(CHAIR);
    args.extend(["--out", "ing"]);
    let o = reform(dir, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("parts"));
    assert!(dir.join("ing/model.json").exists());
    assert!(dir.join("ing/contacts.json").exists());
}
