use std::io::Write;
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tpdp::output::format_float;
use tpdp_core::{account_poisson, AccountingOptions, Adjacency, Query};

fn tpdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = tpdp(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    let errors: Vec<String> = validator().iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{args:?} violates the schema: {errors:?}");
    v
}

fn validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        let text = include_str!("../schema/output.schema.json");
        jsonschema::validator_for(&serde_json::from_str(text).unwrap()).unwrap()
    })
}

fn num(v: &Value) -> f64 {
    match v {
        Value::String(s) if s == "inf" => f64::INFINITY,
        _ => v.to_string().parse().unwrap(),
    }
}

const SMALL: [&str; 8] = ["--n", "200", "--p", "0.05", "--B", "15", "--sigma", "1.2"];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn every_command_emits_schema_valid_json() {
    json(&with(&["delta"], &with(&SMALL, &["--epsilon", "1", "--steps", "3"])));
    json(&with(
        &["epsilon"],
        &with(&SMALL, &["--delta", "1e-5", "--adjacency", "zero-out"]),
    ));
    json(&with(
        &["curve"],
        &with(&SMALL, &["--epsilons", "0,0.5,1", "--direction", "forward"]),
    ));
    json(&[
        "calibrate",
        "--n",
        "200",
        "--p",
        "0.05",
        "--B",
        "15",
        "--epsilon",
        "2",
        "--delta",
        "1e-5",
    ]);
    json(&[
        "compare",
        "--n",
        "200",
        "--p",
        "0.05",
        "--B",
        "15",
        "--epsilon",
        "2",
        "--delta",
        "1e-5",
    ]);
    json(&["simulate", "--n", "5", "--p", "0.3", "--B", "2", "--trials", "1"]);
    json(&[
        "simulate", "--n", "20", "--p", "0.3", "--B", "4", "--trials", "500", "--seed", "11",
    ]);
}

#[test]
fn schema_rejects_malformed_records() {
    let bad = serde_json::json!({"command": "delta", "epsilon": 1.0});
    assert!(!validator().is_valid(&bad));
    let extra = serde_json::json!({
        "command": "simulate", "mode": "exact", "tv_distance_present": 0.0, "tv_distance_absent": 0.0,
        "truncation_frequency": 0.0, "truncation_probability": 0.0, "inclusion_frequency": 0.0,
        "inclusion_probability": 0.0, "trials": 1, "seed": 0, "params": {"n": 2, "p": 0.5, "B": 1}, "junk": 1
    });
    assert!(!validator().is_valid(&extra));
}

#[test]
fn zero_probability_means_no_leakage() {
    let base = ["--n", "50", "--p", "0", "--B", "5", "--sigma", "0.7", "--steps", "4"];
    let d = json(&with(&["delta"], &with(&base, &["--epsilon", "0"])));
    assert_eq!(num(&d["delta"]), 0.0);
    let e = json(&with(&["epsilon"], &with(&base, &["--delta", "1e-9"])));
    assert_eq!(num(&e["epsilon"]), 0.0);
}

#[test]
fn tiny_delta_reports_unbounded_epsilon() {
    let e = json(&with(&["epsilon"], &with(&SMALL, &["--delta", "1e-300"])));
    assert_eq!(e["epsilon"], "inf");
}

#[test]
fn delta_and_epsilon_invert_each_other() {
    let d = json(&with(&["delta"], &with(&SMALL, &["--epsilon", "0.8", "--steps", "5"])));
    let delta = d["delta"].to_string();
    let e = json(&with(&["epsilon"], &with(&SMALL, &["--delta", &delta, "--steps", "5"])));
    assert!((num(&e["epsilon"]) - 0.8).abs() <= 1e-4);
}

#[test]
fn never_truncating_matches_untruncated_pipeline() {
    for adj in Adjacency::ALL {
        let d = json(&[
            "delta",
            "--n",
            "40",
            "--p",
            "0.1",
            "--B",
            "40",
            "--sigma",
            "0.9",
            "--steps",
            "3",
            "--epsilon",
            "0.5",
            "--adjacency",
            adj.as_str(),
        ]);
        let query = Query::Delta { epsilon: 0.5 };
        let want = account_poisson(0.1, 0.9, adj, 3, query, &AccountingOptions::default()).unwrap();
        assert_eq!(d["delta"].to_string(), format_float(want.delta), "{adj}");
    }
    let c = json(&[
        "compare",
        "--n",
        "10",
        "--p",
        "0.5",
        "--B",
        "10",
        "--epsilon",
        "1",
        "--delta",
        "1e-5",
        "--steps",
        "5",
    ]);
    assert_eq!(c["sigma_tight"], c["sigma_naive"]);
}

#[test]
fn curve_rows_are_consistent() {
    let args = with(&SMALL, &["--steps", "4"]);
    let c = json(&with(&["curve"], &with(&args, &["--epsilons", "0,0.25,0.5,1,2,4"])));
    let rows = c["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let mut last = f64::INFINITY;
    for r in rows {
        let (t, n) = (num(&r["delta_tight"]), num(&r["delta_naive"]));
        assert!(t <= last);
        assert!(t <= n);
        last = t;
    }
    let single = json(&with(&["curve"], &with(&args, &["--epsilons", "0.5"])));
    let d = json(&with(&["delta"], &with(&args, &["--epsilon", "0.5"])));
    assert_eq!(single["rows"][0]["delta_tight"], d["delta"]);

    let csv = tpdp(&with(
        &["curve"],
        &with(&args, &["--epsilons", "0,1", "--format", "csv"]),
    ));
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("epsilon,delta_tight,delta_naive\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn exact_simulation_confirms_equivalence() {
    let s = json(&["simulate", "--n", "2", "--p", "0.5", "--B", "1", "--trials", "1"]);
    assert_eq!(s["mode"], "exact");
    assert!(num(&s["tv_distance_present"]) <= 1e-12);
    assert!(num(&s["tv_distance_absent"]) <= 1e-12);
    assert_eq!(s["inclusion_frequency"], s["inclusion_probability"]);
}

#[test]
fn monte_carlo_frequencies_are_close() {
    let s = json(&[
        "simulate", "--n", "25", "--p", "0.4", "--B", "8", "--trials", "20000", "--seed", "5",
    ]);
    assert_eq!(s["mode"], "monte-carlo");
    let se = |q: f64| 5.0 * (q * (1.0 - q) / 20000.0).sqrt();
    let (tf, tp) = (num(&s["truncation_frequency"]), num(&s["truncation_probability"]));
    assert!((tf - tp).abs() <= se(tp));
    let (inf, inp) = (num(&s["inclusion_frequency"]), num(&s["inclusion_probability"]));
    assert!((inf - inp).abs() <= se(inp));
    assert!(num(&s["tv_distance_present"]) < 0.05);
}

#[test]
fn config_file_and_flag_precedence() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(
        f,
        r#"{{"n": 200, "p": 0.05, "B": 15, "sigma": 1.2, "epsilon": 1.0, "steps": 3}}"#
    )
    .unwrap();
    let path = f.path().to_str().unwrap();
    let from_file = json(&["delta", "--config", path]);
    let from_flags = json(&with(&["delta"], &with(&SMALL, &["--epsilon", "1", "--steps", "3"])));
    assert_eq!(from_file, from_flags);
    let overridden = json(&["delta", "--config", path, "--steps", "1"]);
    assert_eq!(overridden["steps"], 1);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| tpdp(args).status.code();
    assert_eq!(code(&["delta", "--bogus"]), Some(2));
    assert_eq!(code(&["delta", "--n", "3"]), Some(2));
    assert_eq!(
        code(&["simulate", "--n", "3", "--p", "0.5", "--B", "1", "--trials", "0"]),
        Some(2)
    );
    assert_eq!(code(&with(&["epsilon"], &with(&SMALL, &["--delta", "2"]))), Some(2));
    assert_eq!(code(&with(&["curve"], &with(&SMALL, &["--epsilons", "1,0"]))), Some(2));
    assert_eq!(code(&["delta", "--config", "/nonexistent/config.json"]), Some(2));
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, r#"{{"n": 10, "typo": 1}}"#).unwrap();
    assert_eq!(code(&["delta", "--config", f.path().to_str().unwrap()]), Some(2));
    // no finite noise level reaches delta = 1e-300 at epsilon = 0
    assert_eq!(
        code(&[
            "calibrate",
            "--n",
            "10",
            "--p",
            "0.5",
            "--B",
            "3",
            "--epsilon",
            "0",
            "--delta",
            "1e-300"
        ]),
        Some(3)
    );
}
