use std::path::Path;
use std::process::{Command, Output};

fn sgcr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgcr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sgcr(args);
    assert!(
        out.status.success(),
        "sgcr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

#[test]
fn example_validates_and_compiles() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("bundle");
    ok(&["example", p(&b), "--steps", "5"]);
    let v = ok(&["validate", p(&b)]);
    assert!(v.contains("0 error(s)"), "{v}");
    let c = ok(&["compile", p(&b)]);
    assert!(c.contains("IED nodes:   45"), "{c}");
}

#[test]
fn validate_fails_on_broken_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("bundle");
    ok(&["example", p(&b), "--variant", "single", "--steps", "2"]);
    std::fs::remove_file(b.join("Thresholds.xml")).unwrap();
    let out = sgcr(&["validate", p(&b)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("MissingThreshold"));
    assert!(!sgcr(&["compile", p(&b)]).status.success());
}

#[test]
fn run_attack_and_diff() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("bundle");
    let attack = dir.path().join("attack.xml");
    ok(&["example", p(&b), "--steps", "25", "--attack", p(&attack), "--attack-at", "8"]);
    let base = dir.path().join("base.ndjson");
    let att = dir.path().join("att.ndjson");
    let again = dir.path().join("again.ndjson");
    ok(&["run", p(&b), "-o", p(&base), "--check-trips"]);
    ok(&["run", p(&b), "-o", p(&again)]);
    ok(&["run", p(&b), "-o", p(&att), "--attack", p(&attack)]);
    assert_eq!(std::fs::read(&base).unwrap(), std::fs::read(&again).unwrap());
    assert!(ok(&["diff", p(&base), p(&again)]).contains("identical"));
    let d = sgcr(&["diff", p(&base), p(&att)]);
    assert!(!d.status.success());
    assert!(String::from_utf8_lossy(&d.stdout).contains("first divergence at tick 8"));
}

#[test]
fn merge_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("bundle");
    ok(&["example", p(&b), "--steps", "2"]);
    let m = dir.path().join("merged");
    ok(&["merge", p(&b), "-o", p(&m)]);
    let scd = std::fs::read_to_string(m.join("merged.scd")).unwrap();
    assert_eq!(scd.matches("<IED ").count(), 47, "45 IEDs, a gateway and a PLC");
    let json = ok(&["export", p(&b), "--layer", "power"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v["buses"].as_array().is_some_and(|b| b.len() == 51));
    let dot = ok(&["export", p(&b), "--layer", "cyber", "--format", "dot"]);
    assert!(dot.starts_with("graph"));
}
