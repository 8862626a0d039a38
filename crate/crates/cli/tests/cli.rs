use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use catsim_core::bag::{Bag, BagStatus};

fn catsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catsim")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn world(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../worlds")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn record(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let out = dir.join(name);
    let r = catsim(&[
        "run",
        &world("leader_follower.json"),
        "--duration",
        "2",
        "--seed",
        seed,
        "--record",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    out
}

const OVERSTEER: &str = r#"{
  "step": 0.001,
  "vehicles": [{
    "name": "car",
    "pose": { "x": 0, "y": 0, "theta": 0 },
    "controller": { "law": { "kind": "constant_profile", "schedule": [
      { "t": 0, "v": 2 }, { "t": 0.5, "v": 2, "delta": 0.7 }
    ] } }
  }]
}"#;

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&catsim(&[])), 1);
    assert_eq!(code(&catsim(&["run"])), 1);
    assert_eq!(code(&catsim(&["run", "w.json", "--bogus"])), 1);
    assert_eq!(code(&catsim(&["play", "x.catbag", "--rate", "fast"])), 1);
    assert_eq!(code(&catsim(&["run", &world("leader_follower.json"), "--rtf", "-1"])), 1);
    let help = catsim(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("diff"));
}

#[test]
fn check_reports_parse_errors() {
    let ok = catsim(&["check", &world("three_cars.json")]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("3 vehicles"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"step\": 0.001,\n  \"vehicles\": [],\n  \"gravity\": 9.8\n}").unwrap();
    let out = catsim(&["check", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("gravity"), "{}", stderr(&out));
    assert!(stderr(&out).contains("line 4"), "{}", stderr(&out));

    assert_eq!(code(&catsim(&["check", "/nonexistent/world.json"])), 2);

    let canon = catsim(&["check", &world("wall_stop.json"), "--canonical"]);
    assert_eq!(code(&canon), 0);
    assert!(stdout(&canon).contains("\"reaction_time\""));
}

#[test]
fn record_diff_info_play() {
    let dir = tempfile::tempdir().unwrap();
    let a = record(dir.path(), "a.catbag", "42");
    let b = record(dir.path(), "b.catbag", "42");
    let c = record(dir.path(), "c.catbag", "43");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let same = catsim(&["diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&same), 0);
    assert_eq!(stdout(&same).trim(), "equal");
    let differ = catsim(&["diff", a.to_str().unwrap(), c.to_str().unwrap()]);
    assert_eq!(code(&differ), 4);
    assert!(stdout(&differ).contains("/follower/gps"), "{}", stdout(&differ));

    let info = catsim(&["info", a.to_str().unwrap()]);
    assert_eq!(code(&info), 0);
    let text = stdout(&info);
    assert!(text.contains("seed:           42"));
    assert!(text.contains("Complete"));
    assert!(text.lines().any(|l| l.contains("/follower/scan") && l.ends_with(" 150")), "{text}");

    let played = catsim(&["play", a.to_str().unwrap(), "--rate", "0", "--echo"]);
    assert_eq!(code(&played), 0);
    let text = stdout(&played);
    let records = Bag::read(&a).unwrap().records.len();
    assert_eq!(text.lines().count(), records + 1);
    assert!(text.contains(&format!("played {records} records")));

    let bytes = std::fs::read(&a).unwrap();
    let cut = dir.path().join("cut.catbag");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let out = catsim(&["info", cut.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("offset"), "{}", stderr(&out));
    assert_eq!(code(&catsim(&["play", cut.to_str().unwrap(), "--rate", "0"])), 2);
}

#[test]
fn topic_filter_limits_recording() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.catbag");
    let r = catsim(&[
        "run",
        &world("leader_follower.json"),
        "--duration",
        "1",
        "--record",
        out.to_str().unwrap(),
        "--topic",
        "/+/scan",
        "--topic",
        "/clock",
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let bag = Bag::read(&out).unwrap();
    let names: Vec<&str> = bag.topics.iter().map(|t| &*t.name).collect();
    assert!(names.iter().all(|n| n.ends_with("/scan") || *n == "/clock"), "{names:?}");
    assert_eq!(bag.records.len(), 1000 + 2 * 75);
}

#[test]
fn controller_fault_isolates_or_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("oversteer.json");
    std::fs::write(&w, OVERSTEER).unwrap();
    let w = w.to_str().unwrap();

    let lenient = catsim(&["run", w, "--duration", "1"]);
    assert_eq!(code(&lenient), 0, "{}", stderr(&lenient));
    assert!(stdout(&lenient).contains("controller fault: car"));
    assert!(stdout(&lenient).contains("ticks: 1000"));

    let bag = dir.path().join("strict.catbag");
    let strict = catsim(&["run", w, "--duration", "1", "--strict", "--record", bag.to_str().unwrap()]);
    assert_eq!(code(&strict), 3);
    assert!(stderr(&strict).contains("delta_max"), "{}", stderr(&strict));
    let bag = Bag::read(&bag).unwrap();
    assert_eq!(bag.status, BagStatus::Partial);
    let last = bag.records.last().unwrap();
    assert_eq!(last.t, 500);
}

#[test]
fn unwritable_record_path_is_a_bind_error() {
    let out = catsim(&[
        "run",
        &world("leader_follower.json"),
        "--duration",
        "1",
        "--record",
        "/nonexistent/dir/out.catbag",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn ui_port_serves_during_run() {
    let out = catsim(&[
        "run",
        &world("leader_follower.json"),
        "--duration",
        "0.2",
        "--rtf",
        "1",
        "--ui-port",
        "0",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("live view at http://127.0.0.1:"));
}
