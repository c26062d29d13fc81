mod common;

use std::io::Write;
use std::process::Command;

use crfloor::cli::{run_args, Outcome, EXIT_MISMATCH, EXIT_OK, EXIT_REFUSED, EXIT_VALIDATION};
use serde_json::Value;

use common::fixture;

fn run(args: &[&str]) -> Outcome {
    run_args(std::iter::once("crfloor").chain(args.iter().copied()))
}

fn path(name: &str) -> String {
    fixture(name).display().to_string()
}

fn temp_problem(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn json(out: &Outcome) -> Value {
    serde_json::from_str(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", out.stdout))
}

#[test]
fn crmult_six_valent() {
    let star = path("sixvalent.json");
    let out = run(&["crmult", "--star", &star]);
    assert_eq!((out.code, out.stdout.trim()), (EXIT_OK, "2"));
    let out = run(&["crmult", "--star", &star, "--format", "json"]);
    assert_eq!(json(&out)["multiplicity"], 2);
}

#[test]
fn verify_theorem_tiny() {
    let out = run(&["verify-theorem", &path("tiny-instance.json"), "--format", "json"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let v = json(&out);
    assert_eq!(v["agree"], true);
    assert_eq!(v["floor"], v["direct"]);
}

#[test]
fn verify_cutting_tiny() {
    let out = run(&["verify-cutting", &path("tiny-instance.json"), "--format", "json"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert_eq!(json(&out)["all_hold"], true);
}

#[test]
fn count_is_deterministic_across_workers() {
    let input = path("tiny-instance.json");
    let reports: Vec<String> = [None, Some("1"), Some("2")]
        .iter()
        .map(|w| {
            let mut args = vec!["count", input.as_str(), "--format", "json"];
            if let Some(w) = w {
                args.extend(["--workers", w]);
            }
            let out = run(&args);
            assert_eq!(out.code, EXIT_OK);
            out.stdout
        })
        .collect();
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
    let v: Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(v["total"], "1");
}

#[test]
fn dimension_failure_is_echoed() {
    let f = temp_problem(
        r#"{"dimension":3,"degree":{"d":1,"alpha":[2],"beta":[1]},"n_points":2,
            "crossratios":[{"entries":[1,2,6,7]},{"entries":[1,2,6,8]},{"entries":[1,2,7,8]}]}"#,
    );
    let out = run(&["count", f.path().to_str().unwrap()]);
    assert_eq!(out.code, EXIT_VALIDATION);
    assert!(out.stderr.contains("left 6") && out.stderr.contains("right 7"), "{}", out.stderr);
}

#[test]
fn missing_field_is_named() {
    let f = temp_problem(r#"{"dimension":3,"n_points":2}"#);
    let out = run(&["diagrams", f.path().to_str().unwrap()]);
    assert_eq!(out.code, EXIT_VALIDATION);
    assert!(out.stderr.contains("degree"), "{}", out.stderr);
}

#[test]
fn refusals() {
    let f = path("paper-example-F.json");
    assert_eq!(run(&["direct", &f]).code, EXIT_REFUSED);
    assert_eq!(run(&["diagrams", &f, "--max-candidates", "100"]).code, EXIT_REFUSED);
    let out = run(&["direct", &f, "--max-ends", "13"]);
    assert_eq!(out.code, EXIT_VALIDATION);
    assert!(out.stderr.contains("capped"));
}

#[test]
fn example_f_count_is_partial() {
    let out = run(&["count", &path("paper-example-F.json"), "--table", &path("v1.tab"), "--max-ends", "6", "--format", "json"]);
    assert_eq!(out.code, EXIT_REFUSED);
    let v = json(&out);
    assert_eq!(v["diagram_count"], 3360);
    assert_eq!(v["total"], Value::Null);
    assert_eq!(v["diagrams"][64]["multiplicity"], "10");
}

#[test]
fn dot_output() {
    let out = run(&["diagrams", &path("tiny-instance.json"), "--format", "dot"]);
    assert_eq!(out.code, EXIT_OK);
    assert!(out.stdout.trim_start().starts_with("graph diagram_0 {"), "{}", out.stdout);
    assert_eq!(out.stdout.matches('{').count(), out.stdout.matches('}').count());
    assert_eq!(run(&["direct", &path("tiny-instance.json"), "--format", "dot"]).code, EXIT_VALIDATION);
}

#[test]
fn vertex_mult_reports_agreement() {
    let out = run(&["vertex-mult", &path("tiny-instance.json"), "--format", "json"]);
    assert_ne!(out.code, EXIT_MISMATCH, "{}", out.stdout);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
}

#[test]
fn binary_runs() {
    let out = Command::new(env!("CARGO_BIN_EXE_crfloor"))
        .args(["crmult", "--star", &path("sixvalent.json")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "2");
    let out = Command::new(env!("CARGO_BIN_EXE_crfloor")).args(["count", "/nonexistent.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION));
    assert!(!out.stderr.is_empty());
}
