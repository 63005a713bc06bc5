use std::path::{Path, PathBuf};

use canwake::harness::cli;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("canwake").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn manifest(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel).display().to_string()
}

fn reference() -> String {
    manifest("vehicles/reference_2017.cfg")
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["attack", "--bogus"]).0, 1);
    assert_eq!(run(&[]).0, 1);
}

#[test]
fn empty_roster_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    std::fs::write(&cfg, "name = \"empty\"\nbitrate = 500000\n").unwrap();
    let (code, _, err) = run(&["attack", "--vehicle", cfg.to_str().unwrap(), "--plan", "wakeup", "--duration", "1h"]);
    assert_eq!(code, 2, "{err}");
    assert!(!err.is_empty());
}

#[test]
fn missing_vehicle_file_is_an_io_error() {
    let (code, _, err) = run(&["simulate", "--vehicle", "/nonexistent/x.cfg", "--duration", "1s"]);
    assert_eq!(code, 2);
    assert!(err.contains("x.cfg"), "{err}");
}

#[test]
fn analyze_finds_the_door_unlock_bit() {
    let (code, out, err) = run(&["analyze", "--trace", &manifest("fixtures/door_unlock.log")]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("001 byte 2 mask 20: 10 -> 30"), "{out}");
}

#[test]
fn full_drain_ladder_ends_at_the_trunk() {
    let (code, out, err) = run(&["attack", "--vehicle", &reference(), "--plan", "full-drain", "--duration", "30d", "--sim-span", "1min"]);
    assert_eq!(code, 0, "{err}");
    let last = out.lines().find(|l| l.starts_with("+ Open Trunk")).unwrap();
    assert!(last.contains("153.3 mA") && last.contains("12.57x"), "{out}");
}

#[test]
fn dob_state_survives_until_battery_reset() {
    let dir = tempfile::tempdir().unwrap();
    let state: PathBuf = dir.path().join("state.json");
    let s = state.to_str().unwrap();
    let (code, out, err) = run(&["attack", "--vehicle", &reference(), "--plan", "dob", "--duration", "10s", "--state-out", s]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("ECUs left in bus-off:   RCM"), "{out}");
    let (code, out, err) = run(&["reset", "--vehicle", &reference(), "--state", s]);
    assert_eq!(code, 0, "{err}");
    assert!(out.lines().any(|l| l.starts_with("RCM") && l.contains("BusOff -> Sleep")), "{out}");
    let saved = std::fs::read_to_string(&state).unwrap();
    assert!(!saved.contains("BusOff"), "{saved}");
}

#[test]
fn reset_rejects_state_for_another_vehicle() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    std::fs::write(&state, r#"{"vehicle":"other","states":[]}"#).unwrap();
    let (code, _, err) = run(&["reset", "--vehicle", &reference(), "--state", state.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("other"), "{err}");
}
