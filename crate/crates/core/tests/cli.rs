use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transient-pg"))
        .args(args)
        .env("TRANSIENT_PG_LOG", "off")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let missing = run(&["evaluate"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("Usage"));
    assert_eq!(run(&["optimal", "--env", "cliffwalk", "--fast"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn model_errors_exit_one() {
    let bad_policy = run(&["evaluate", "--env", "pathological", "--policy", "actions:0,0"]);
    assert_eq!(bad_policy.status.code(), Some(1));
    let bad_alpha = run(&[
        "solve-ppg",
        "--env",
        "pathological",
        "--alpha",
        "0.7",
        "--eta",
        "0.1",
        "--iters",
        "2",
    ]);
    assert_eq!(bad_alpha.status.code(), Some(1));
    assert_eq!(
        run(&["evaluate", "--mdp", "/nonexistent/m.toml"]).status.code(),
        Some(1)
    );
}

#[test]
fn environment_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("lake.toml");
    assert!(run(&["env", "--env", "frozenlake", "--out", path(&file)])
        .status
        .success());
    let from_file = run(&["optimal", "--mdp", path(&file), "--format", "json"]);
    let builtin = run(&["optimal", "--env", "frozenlake", "--format", "json"]);
    let a: Value = serde_json::from_str(&stdout(&from_file)).unwrap();
    let b: Value = serde_json::from_str(&stdout(&builtin)).unwrap();
    assert_eq!(a["v_star"], b["v_star"]);
    assert_eq!(a["pi_star"], b["pi_star"]);
    assert!((a["v_mu"].as_f64().unwrap() - 0.7291666666666666).abs() < 1e-12);
}

#[test]
fn evaluate_json_and_point_mu() {
    let out = run(&[
        "evaluate",
        "--env",
        "pathological",
        "--mu",
        "point:0",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["v_mu"].as_f64().unwrap(), 0.0);
    assert_eq!(doc["states"][1]["v"].as_f64().unwrap(), -1.0);

    let dir = tempfile::tempdir().unwrap();
    let mu = dir.path().join("mu.txt");
    std::fs::write(&mu, "0, 0, 1, 0, 0\n").unwrap();
    let arg = format!("file:{}", path(&mu));
    let out = run(&["evaluate", "--env", "pathological", "--mu", &arg, "--format", "json"]);
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["v_mu"].as_f64().unwrap(), 1.0);
}

#[test]
fn analyze_reports_both_forms() {
    let text = stdout(&run(&["analyze", "--env", "cliffwalk"]));
    assert!(text.contains("spectral radius"));
    let json = run(&["analyze", "--env", "pathological", "--format", "json"]);
    let doc: Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(doc["support"]["recurrent"], serde_json::json!([3, 4]));
    assert_eq!(doc["finite_values"]["holds_necessary"], Value::Bool(true));
}

#[test]
fn gradcheck_is_accurate() {
    for param in ["direct", "softmax"] {
        let out = run(&[
            "gradcheck",
            "--env",
            "frozenlake",
            "--policy",
            "random",
            "--param",
            param,
            "--format",
            "json",
        ]);
        let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert!(doc["max_relative_error"].as_f64().unwrap() < 1e-5, "{param}");
    }
}

#[test]
fn solver_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("npg.csv");
    let out = run(&[
        "solve-npg",
        "--env",
        "pathological",
        "--eta0",
        "0.1",
        "--growth",
        "1.01",
        "--iters",
        "20",
        "--out",
        path(&csv),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "iter,v_mu,gap,eta");
    assert_eq!(lines.len(), 22);
    assert_eq!(lines[1], "0,0,0.40000000000000002,0.10000000000000001");

    let ppg = stdout(&run(&[
        "solve-ppg",
        "--env",
        "pathological",
        "--alpha",
        "0.1",
        "--eta",
        "0.1",
        "--iters",
        "3",
        "--no-reference",
    ]));
    assert!(ppg.lines().nth(1).unwrap().contains(",nan,"));

    let reference = dir.path().join("ref.json");
    assert!(run(&[
        "optimal",
        "--env",
        "pathological",
        "--format",
        "json",
        "--out",
        path(&reference)
    ])
    .status
    .success());
    let with_file = stdout(&run(&[
        "solve-npg",
        "--env",
        "pathological",
        "--eta",
        "0.1",
        "--iters",
        "3",
        "--reference",
        path(&reference),
    ]));
    let computed = stdout(&run(&[
        "solve-npg",
        "--env",
        "pathological",
        "--eta",
        "0.1",
        "--iters",
        "3",
    ]));
    assert_eq!(with_file, computed);
}

#[test]
fn experiment_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = run(&[
            "experiment",
            "--env",
            "pathological",
            "--preset",
            "paper",
            "--iters",
            "50",
            "--out",
            path(out),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        assert!(stdout(&res).contains("npg_geometric"));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for name in names {
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}
