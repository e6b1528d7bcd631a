// SPDX-License-Identifier: Apache-2.0

//! The `olympus` binary end to end.

mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn olympus(data_dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_olympus"));
    cmd.env_remove("PORT").env_remove("MAX_ASSET_MB").env("DATA_DIR", data_dir);
    cmd
}

fn run(data_dir: &Path, args: &[&str]) -> Output {
    olympus(data_dir).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn fixture() -> String {
    common::fixture_dir().to_str().unwrap().to_owned()
}

#[test]
fn token_requires_a_role() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["token", "P1"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("empty_roles"));
    assert!(stdout(&out).is_empty());

    let out = run(dir.path(), &["token", "P1", "janitor"]);
    assert!(!out.status.success());

    let out = run(dir.path(), &["token", "P1", "crowd_worker, student"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let token = stdout(&out).trim().to_owned();
    assert!(token.starts_with("olp_") && token.len() == 52, "{token}");
}

#[test]
fn seed_export_and_reseed_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["seed", &fixture()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "templates: 6, masters: 6");

    let first = run(dir.path(), &["export"]);
    assert!(first.status.success());
    let doc: Value = serde_json::from_slice(&first.stdout).unwrap();
    let names: Vec<&str> = doc["templates"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    for name in olympus::fixtures::DEVICE_NAMES {
        assert!(names.contains(&name), "{name} missing from {names:?}");
    }

    // Seeding replaces, so a second run does not duplicate anything.
    assert!(run(dir.path(), &["seed", &fixture()]).status.success());
    let second = run(dir.path(), &["export"]);
    assert_eq!(first.stdout, second.stdout);
    let checked_in = std::fs::read(common::fixture_dir().join("catalogue.json")).unwrap();
    assert_eq!(first.stdout, checked_in);
}

#[test]
fn seed_of_a_missing_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["seed", "/definitely/not/here"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("not_found"));
    let out = run(dir.path(), &["export"]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["templates"].as_array().unwrap().is_empty());
}

#[test]
fn export_bundle_and_import_modes() {
    let source = tempfile::tempdir().unwrap();
    assert!(run(source.path(), &["seed", &fixture()]).status.success());
    let bundle = tempfile::tempdir().unwrap();
    let out = run(source.path(), &["export", "--out", bundle.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_dir(bundle.path().join("assets")).unwrap().count(), 1);

    let target = tempfile::tempdir().unwrap();
    let out = run(target.path(), &["import", bundle.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("templates: 6"));

    let out = run(target.path(), &["import", bundle.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("import_conflict"));

    let file = bundle.path().join("catalogue.json");
    let out = run(target.path(), &["import", file.to_str().unwrap(), "--mode", "replace"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(run(target.path(), &["export"]).stdout, run(source.path(), &["export"]).stdout);
}

#[test]
fn serve_answers_and_rejects_a_busy_port() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["seed", &fixture()]).status.success());
    let token = stdout(&run(dir.path(), &["token", "S1", "student"])).trim().to_owned();

    let port = std::net::TcpListener::bind("0.0.0.0:0").unwrap().local_addr().unwrap().port();
    let mut child = olympus(dir.path())
        .args(["serve", "--port", &port.to_string()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut banner).unwrap();
    assert_eq!(banner.trim(), format!("listening on http://0.0.0.0:{port}"));

    let addr = ([127, 0, 0, 1], port).into();
    let (status, body) = common::http(addr, "GET", "/features", Some(&token), "", b"");
    let busy = run(dir.path(), &["serve", "--port", &port.to_string()]);
    child.kill().unwrap();
    child.wait().unwrap();

    assert_eq!(status, 200);
    let features: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(features.as_array().unwrap().len(), 12);
    assert!(!busy.status.success());
    let err = stderr(&busy);
    assert!(err.contains("already in use") && err.contains("(conflict)"), "{err}");
}
