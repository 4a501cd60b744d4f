use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn frontflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frontflow"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FRONTFLOW_SEED")
        .output()
        .expect("binary runs")
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).expect("stderr is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL_DISK: &str = r#"{
  "name": "small-disk",
  "grid": {"dim": 2, "shape": 128, "halfWidth": 2.0},
  "initialSet": {"shape": "disk", "radius": 0.5, "r0": 0.25},
  "v0": {"formula": {"type": "constant", "value": 0.0}},
  "model": {"A": 1.0, "B": 1.0, "kappa": 0.0, "law": {"kind": "constant", "value": 1.0}},
  "run": {"T": 0.5, "eikonalOnly": true}
}"#;

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = frontflow(&["spin", "--config", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let e = error_of(&out);
    assert_eq!(e["error"]["kind"], "usage");
    assert_eq!(e["error"]["exitCode"], 2);
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let out = frontflow(&["eikonal", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["error"]["exitCode"], 2);
}

#[test]
fn invalid_config_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL_DISK.replace(r#""A": 1.0, "B": 1.0"#, r#""A": 2.0, "B": 1.0"#);
    let cfg = write_config(dir.path(), "bad.json", &bad);
    let out = frontflow(&["eikonal", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let e = error_of(&out);
    assert!(e["error"]["violations"].as_array().is_some_and(|v| !v.is_empty()), "{e}");
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "disk.json", SMALL_DISK);
    let out = frontflow(&["eikonal", "--config", cfg.to_str().unwrap(), "--threads", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diagnose_passes_the_ball_property_of_a_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "disk.json", SMALL_DISK);
    let out_dir = dir.path().join("out");
    let out = frontflow(&["diagnose", "--config", cfg.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&out_dir.join("diagnose.json"));
    assert_eq!(m["results"]["ball"]["pass"], true);
    assert!(out_dir.join("ball_report.csv").exists());
}

#[test]
fn manifest_numbers_carry_units_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "disk.json", SMALL_DISK);
    let out_dir = dir.path().join("out");
    let out = frontflow(&["eikonal", "--config", cfg.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(0));
    let m = read_json(&out_dir.join("eikonal.json"));
    assert_eq!(m["config"]["run"]["T"]["units"], "time");
    assert_eq!(m["config"]["run"]["T"]["source"], "configured");
    fn check(v: &Value, path: &str) {
        match v {
            Value::Number(_) => panic!("bare number at {path}"),
            Value::Object(o) if o.contains_key("units") => assert!(o.contains_key("source"), "{path}"),
            Value::Object(o) => o.iter().for_each(|(k, x)| check(x, &format!("{path}.{k}"))),
            Value::Array(a) => a.iter().for_each(|x| check(x, path)),
            _ => {}
        }
    }
    check(&m["results"], "results");
    check(&m["config"], "config");
}

#[test]
fn seed_override_is_recorded_and_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("disk_small");
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_frontflow"))
            .args(["couple", "--config", cfg.to_str().unwrap(), "--dump-iterates", "--out"])
            .arg(&out_dir)
            .env("FRONTFLOW_SEED", "99")
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    let m = read_json(&a.join("couple.json"));
    assert_eq!(m["seed"]["value"], 99);
    assert_eq!(m["results"]["status"], "converged");
    assert!(a.join("iterates").read_dir().unwrap().count() >= 4);
    for entry in a.join("iterates").read_dir().unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.join("iterates").join(&name)).unwrap(),
            std::fs::read(b.join("iterates").join(&name)).unwrap()
        );
    }
    assert_eq!(std::fs::read(a.join("couple.json")).unwrap(), std::fs::read(b.join("couple.json")).unwrap());
}

#[test]
fn unconverged_iteration_exits_with_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("disk_small")).unwrap();
    let text = text.replace(r#""run": {"T": 1.0}"#, r#""run": {"T": 1.0, "maxIter": 1}"#);
    let cfg = write_config(dir.path(), "short.json", &text);
    let out = frontflow(&["couple", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["error"]["exitCode"], 1);
}
