use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hidden-gibbs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, text: &str) -> String {
    let path = dir.join("spec.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv_column(text: &str, col: usize) -> Vec<(String, f64)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            (cells[0].to_string(), cells[col].parse().unwrap())
        })
        .collect()
}

const BERNOULLI: &str = r#"{"alphabet": ["a", "b"],
    "potential": {"kind": "constant", "r": 1, "value": 0.0}, "word_length": 5}"#;

const MERGED: &str = r#"{"alphabet": ["0", "1", "2"], "target_alphabet": ["0", "1"],
    "amalgamation": {"0": "0", "1": "1", "2": "1"},
    "potential": {"kind": "weight-matrix", "weights": [[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.1, 0.6]]},
    "word_length": 4, "report": {"n_max": 5, "lookahead": 3}}"#;

#[test]
fn uniform_bernoulli_cylinders() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), BERNOULLI);
    let out = dir.path().join("out");
    let res = run(&["measure", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(String::from_utf8(res.stdout).unwrap(), "wrote measure.csv\nwrote measure.json\n");
    let rows = csv_column(&std::fs::read_to_string(out.join("measure.csv")).unwrap(), 1);
    assert_eq!(rows.len(), 32);
    for (w, lp) in rows {
        assert!((lp + 5.0 * 2f64.ln()).abs() < 1e-12, "{w}: {lp}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("measure.json")).unwrap()).unwrap();
    assert!((summary["pressure"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn log2_converts_output_only() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), BERNOULLI);
    let res = run(&["measure", "--spec", &spec, "--log2"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("word,log2_prob\n"));
    assert!(text.contains("\nababa,-5\n"), "{text}");
    assert!(text.contains("\"pressure\": 1.0"), "{text}");
}

#[test]
fn stochastic_weights_have_zero_pressure() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), MERGED);
    let out = dir.path().join("o");
    let res = run(&["report", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["measure"]["pressure"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(report["measure"]["gibbs_check"]["violations"], 0);
    assert_eq!(report["pushforward"]["gibbs_check"]["violations"], 0);
    assert!(out.join("variation.csv").exists());
}

#[test]
fn verify_passes_and_reports_each_check() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), MERGED);
    let res = run(&["verify", "--spec", &spec]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    for check in ["measure,", "periodic,", "pressure_trace,", "log_rho,", "pushforward,"] {
        assert!(text.contains(check), "missing {check}");
    }
    assert!(!text.contains("mismatch"));
    for cmd in ["measure", "pushforward", "induced"] {
        let res = run(&[cmd, "--spec", &spec, "--verify"]);
        assert_eq!(res.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
    }
}

#[test]
fn lumpable_chain_verifies_against_lumped_potential() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"alphabet": ["0", "1", "2"], "target_alphabet": ["a", "b"],
            "amalgamation": {"0": "a", "1": "b", "2": "b"},
            "potential": {"kind": "weight-matrix",
                "weights": [[0.5, 0.3, 0.2], [0.4, 0.35, 0.25], [0.4, 0.25, 0.35]]},
            "schedule": {"n": 10}, "word_length": 3}"#,
    );
    let res = run(&["induced", "--spec", &spec, "--verify"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let res = run(&["verify", "--spec", &spec]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("lumped_induced,"));
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn oracle_underflow_is_a_verify_mismatch() {
    // the plain-probability oracle loses everything near exp(-740)
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"alphabet": ["0", "1"], "potential": {"kind": "table", "r": 1,
            "entries": {"00": -740.0, "01": -740.7, "10": -740.2, "11": -740.0}}, "word_length": 3}"#,
    );
    let res = run(&["measure", "--spec", &spec]);
    assert_eq!(res.status.code(), Some(0));
    let res = run(&["measure", "--spec", &spec, "--verify"]);
    assert_eq!(res.status.code(), Some(4));
    // the table is still written
    assert!(String::from_utf8(res.stdout).unwrap().contains("word,log_prob"));
    assert!(String::from_utf8(res.stderr).unwrap().contains("mu[000]"));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write_spec(
        dir.path(),
        r#"{"alphabet": ["0", "1", "2", "3"], "target_alphabet": ["x", "y", "z"],
            "amalgamation": {"0": "x", "1": "x", "2": "y", "3": "y"},
            "potential": {"kind": "constant", "r": 1, "value": 0.0}}"#,
    );
    let res = run(&["pushforward", "--spec", &missing]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8(res.stderr).unwrap().contains("`z`"));

    assert_eq!(run(&["measure"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));

    let spec = write_spec(dir.path(), MERGED);
    assert_eq!(run(&["measure", "--spec", &spec, "--r", "0"]).status.code(), Some(2));
    assert_eq!(run(&["induced", "--spec", &spec, "--n", "1"]).status.code(), Some(2));
    assert_eq!(run(&["induced", "--spec", &spec, "--tol", "-1"]).status.code(), Some(2));

    let no_map = write_spec(dir.path(), r#"{"alphabet": ["0", "1"], "potential": {"kind": "constant", "r": 1, "value": 0.0}}"#);
    assert_eq!(run(&["induced", "--spec", &no_map]).status.code(), Some(2));
    let table = write_spec(
        dir.path(),
        r#"{"alphabet": ["0", "1"], "potential": {"kind": "table", "r": 2, "entries": {"000": 0.0, "001": 0.1, "010": 0.2, "011": 0.3,
                "100": 0.4, "101": 0.5, "110": 0.6, "111": 0.7}}}"#,
    );
    assert_eq!(run(&["measure", "--spec", &table]).status.code(), Some(0));
    let res = run(&["measure", "--spec", &table, "--r", "1"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8(res.stderr).unwrap().contains("below the range"));
}

#[test]
fn unreachable_tolerance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"alphabet": ["0", "1", "2"], "target_alphabet": ["x", "y"],
            "amalgamation": {"0": "x", "1": "y", "2": "y"},
            "potential": {"kind": "geometric-tail", "values": [0.0, 0.4, 0.9], "ratio": 0.5}}"#,
    );
    let res = run(&["induced", "--spec", &spec, "--tol", "1e-6"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8(res.stderr).unwrap().contains("unreachable"));
}

#[test]
fn double_limit_meets_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"alphabet": ["0", "1", "2"], "target_alphabet": ["x", "y"],
            "amalgamation": {"0": "x", "1": "y", "2": "y"},
            "potential": {"kind": "geometric-tail", "values": [0.0, 0.1, 0.2], "ratio": 0.1},
            "word_length": 2, "report": {"n_max": 3, "lookahead": 2}}"#,
    );
    let out = dir.path().join("o");
    let res = run(&["induced", "--spec", &spec, "--tol", "0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = csv_column(&std::fs::read_to_string(out.join("induced.csv")).unwrap(), 2);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|(_, bar)| *bar <= 0.1));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("induced.json")).unwrap()).unwrap();
    let ev = &summary["evaluator"];
    assert_eq!(ev["mode"], "double-limit");
    for key in ["r", "n", "theta", "constants", "psi_constants", "budget"] {
        assert!(!ev[key].is_null(), "missing {key}");
    }
}

#[test]
fn explicit_words_with_separator() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"alphabet": ["up", "down", "flat"], "target_alphabet": ["move", "flat"],
            "amalgamation": {"up": "move", "down": "move", "flat": "flat"},
            "potential": {"kind": "first-symbol-weighted", "weights": [0.25, 0.25, 0.5]},
            "words": ["move,flat", "flat,flat,flat"]}"#,
    );
    let res = run(&["pushforward", "--spec", &spec]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    let lp = |w: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("\"{w}\""))).unwrap();
        line.rsplit(',').next().unwrap().parse().unwrap()
    };
    assert!((lp("move,flat") - 0.25f64.ln()).abs() < 1e-12);
    assert!((lp("flat,flat,flat") - 0.125f64.ln()).abs() < 1e-12);
}
