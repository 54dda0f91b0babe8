//! End-to-end behavior of the binary: exit codes, formats, file input
//! and output.

use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU32, Ordering};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corank2"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes `name` under a fresh scratch directory and returns its path.
fn scratch(name: &str, content: &str) -> PathBuf {
    static COUNTER: AtomicU32 = AtomicU32::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!("corank2-cli-{}-{n}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    let path = dir.join(name);
    std::fs::write(&path, content).expect("write scratch file");
    path
}

const CUBIC_FILE: &str = "\
[coordinates]
x1 x2 y1 y2 z1 z2

[forms]
lambda1 = dz1 - y1*dx1 - y2*dx2 - (x2^3/3 + x2 + 2*x1)*dy1
lambda2 = dz2 - y2*dx1 - y1*dx2

[reeb]
Z1 = @z1
Z2 = @z2

[domain]
x2 = -0.9 0.9
";

#[test]
fn classify_on_a_grid_reports_the_band() {
    let out = run(&["classify", "--model", "cubic", "--grid", "x2=-2:2:401"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("hyperbolic for x2 in [-2, -1.01]"), "{text}");
    assert!(text.contains("elliptic for x2 in [-0.99, 0.99"), "{text}");
    assert!(text.contains("degenerate for x2 in [1, 1]"), "{text}");
}

#[test]
fn non_elliptic_evaluation_exits_3_with_the_determinant() {
    let out = run(&[
        "s-tensor",
        "--model",
        "flat_hyperbolic",
        "--point",
        "0,0,0,0,0,0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(
        stderr(&out).contains("non-elliptic: det=-1"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn usage_errors_exit_2() {
    let cases: &[&[&str]] = &[
        &["classify", "--model", "nosuch"],
        &["classify"],
        &["classify", "--model", "cubic", "--point", "1,2,3"],
        &["classify", "--model", "cubic", "--grid", "x2=0:1"],
        &["classify", "--model", "cubic", "--grid", "w=0:1:5"],
        &["classify", "--model", "cubic", "--format", "csv"],
        &["reeb-check", "--model", "cubic", "--kappa", "sin(y1)"],
        &["s-tensor", "--model", "cubic", "--file", "/nonexistent"],
        &["scan", "--model", "cubic"],
        &["no-such-command"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "args {args:?}: {}", stderr(&out));
    }
}

#[test]
fn kappa_on_a_non_perturbed_model_exits_2() {
    let out = run(&["classify", "--model", "cubic", "--kappa", "sin(y1)"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn failing_conditions_exit_1() {
    let bad_pair = CUBIC_FILE.replace("Z1 = @z1", "Z1 = @z1 + x1*@y2");
    let path = scratch("bad-pair.toml", &bad_pair);
    let out = run(&["reeb-check", "--file", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("FAIL curvature-degeneracy"), "{text}");
    assert!(text.contains("PASS duality"), "{text}");
}

#[test]
fn model_files_match_the_builtin_catalog() {
    let path = scratch("cubic.toml", CUBIC_FILE);
    let from_file = run(&[
        "classify",
        "--file",
        path.to_str().unwrap(),
        "--point",
        "0,0.3,0,0,0,0",
        "--format",
        "json",
    ]);
    let builtin = run(&[
        "classify",
        "--model",
        "cubic",
        "--point",
        "0,0.3,0,0,0,0",
        "--format",
        "json",
    ]);
    assert_eq!(from_file.status.code(), Some(0), "{}", stderr(&from_file));
    assert_eq!(builtin.status.code(), Some(0));

    let parse = |out: &Output| -> serde_json::Value {
        serde_json::from_str(&stdout(out)).expect("valid json")
    };
    let a = parse(&from_file);
    let b = parse(&builtin);
    assert_eq!(a["points"][0]["det"], b["points"][0]["det"]);
    assert_eq!(a["points"][0]["kind"], "elliptic");
    assert_eq!(a["model"], "cubic");
}

#[test]
fn malformed_model_files_exit_2_with_line_numbers() {
    let broken = CUBIC_FILE.replace("lambda2", "lambda3");
    let path = scratch("broken.toml", &broken);
    let out = run(&["classify", "--file", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 6"), "{err}");
    assert!(err.contains("lambda3"), "{err}");
}

#[test]
fn scan_emits_csv_and_respects_output_files() {
    let target = std::env::temp_dir().join(format!("corank2-scan-{}.csv", std::process::id()));
    let out = run(&[
        "scan",
        "--model",
        "cubic",
        "--grid",
        "x2=-1.2:1.2:7",
        "--format",
        "csv",
        "--output",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());

    let csv = std::fs::read_to_string(&target).expect("csv written");
    std::fs::remove_file(&target).ok();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[0], "x2,det,classification");
    assert!(lines[1].starts_with("-1.200000000000e0,"), "{}", lines[1]);
    assert!(lines[1].ends_with("hyperbolic"), "{}", lines[1]);
    assert!(lines[4].ends_with("elliptic"), "{}", lines[4]);
}

#[test]
fn verify_json_has_the_full_battery() {
    let out = run(&["verify", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert_eq!(report["command"], "verify");
    let items = report["items"].as_array().expect("items array");
    assert_eq!(items.len(), 14);
    for item in items {
        assert_eq!(item["status"], "pass", "{item}");
    }
}

#[test]
fn perturbed_model_accepts_a_shear_expression() {
    let out = run(&[
        "classify",
        "--model",
        "perturbed",
        "--kappa",
        "sin(y1)",
        "--point",
        "0,0.3,0.5,0,0,0",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert_eq!(report["model"], "perturbed kappa=sin(y1)");
    assert_eq!(report["points"][0]["kind"], "elliptic");

    let bad = run(&["classify", "--model", "perturbed", "--kappa", "sin(z1)"]);
    assert_eq!(bad.status.code(), Some(2), "{}", stderr(&bad));
}

#[test]
fn j_structure_passes_on_elliptic_points_of_every_kind_of_model() {
    for model in ["cubic", "flat_elliptic", "global"] {
        let out = run(&[
            "j-structure",
            "--model",
            model,
            "--point",
            "0.1,0.2,-0.1,0.3,0,0",
        ]);
        assert_eq!(out.status.code(), Some(0), "{model}: {}", stderr(&out));
        assert!(stdout(&out).contains("PASS j-squared"), "{model}");
    }
}

#[test]
fn factor_certifies_decomposability() {
    let out = run(&[
        "factor",
        "--model",
        "cubic",
        "--point",
        "0,0.5,0,0,0,0",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert_eq!(report["items"][0]["name"], "decomposable");
    assert_eq!(report["items"][0]["status"], "pass");
    let alpha = report["points"][0]["alpha"].as_array().expect("alpha");
    assert_eq!(alpha.len(), 4);
}

#[test]
fn globalize_check_passes() {
    let out = run(&["globalize-check"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("PASS elliptic along the line"));
}
