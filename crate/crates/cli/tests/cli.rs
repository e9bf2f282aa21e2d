use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn hhk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hhk")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json output")
}

const P0: &str = r#"{"r":0.02,"sigma":0.2,"aPrime":-0.1,"a":0.05,"b":0.15,"bPrime":0.3,"delta":0.3,"alpha":0.5,"beta":0.1,"eta":1,"w":5}"#;

fn config_file(dir: &tempfile::TempDir, params: &str) -> String {
    let path = dir.path().join("config.json");
    fs::write(&path, format!(r#"{{"params":{params}}}"#)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn solve_reference() {
    let o = hhk(&["solve"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!((v["pi"].as_f64().unwrap() - 23.75).abs() < 0.01);
    assert!((v["psi"].as_f64().unwrap() - 5.0).abs() < 1e-10);
    assert_eq!(v["regimeName"], "Standard");
    assert!(v["config"]["params"].is_object());
    assert!(v["version"].is_string());
}

#[test]
fn solve_overlap_routes_to_abstention() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(&dir, &P0.replace(r#""a":0.05"#, r#""a":0.15"#));
    let o = hhk(&["--config", &cfg, "solve"]);
    assert_eq!(code(&o), 0);
    assert!(json(&o)["regimeName"].as_str().unwrap().starts_with("Abstention"));
}

#[test]
fn ill_posed_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(&dir, &P0.replace(r#""delta":0.3"#, r#""delta":0.001"#));
    let o = hhk(&["--config", &cfg, "solve"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&hhk(&["bogus"])), 1);
    assert_eq!(code(&hhk(&["statics", "nothing"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(&dir, &P0.replace(r#""w":5"#, r#""w":5,"extra":1"#));
    assert_eq!(code(&hhk(&["--config", &cfg, "solve"])), 1);
    assert_eq!(code(&hhk(&["simulate", "--paths", "0"])), 1);
}

#[test]
fn simulate_is_reproducible_and_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for f in [&a, &b] {
        let o = hhk(&["simulate", "--paths", "2", "--seed", "9", "--dt", "0.01", "--horizon", "3", "--out", f.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("# hhk "));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip_while(|l| l.starts_with("path"))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert!(text.lines().any(|l| l == "path,t,B,eps_a,eps_b,L,Y,C,V"));
    assert_eq!(rows.len(), 2 * 301);
    let mut prev_c = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let (t, l, y, c, v) = (r[1], r[5], r[6], r[7], r[8]);
        if i % 301 == 0 {
            prev_c = 0.0;
            assert_eq!(t, 0.0);
            assert!((v - 5.0).abs() < 1e-9, "V_0 = {v}");
        }
        assert!(y >= l * (1.0 - 1e-12));
        if c > prev_c {
            assert!((y - l).abs() <= 1e-9 * l, "row {i}");
        }
        prev_c = c;
    }
}

#[test]
fn statics_sigma_decreasing() {
    let o = hhk(&["statics", "sigma"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().next().unwrap().starts_with("# hhk"));
    let pis: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("param"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(pis.len(), 20);
    assert!(pis.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn verify_worstcase_passes() {
    let o = hhk(&["verify", "worstcase", "--paths", "300", "--dt", "0.03125", "--candidates", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v = json(&o);
    assert_eq!(v["check"], "worstcase");
    assert_eq!(v["pass"], true);
    for key in ["margin", "se", "config"] {
        assert!(!v[key].is_null(), "{key}");
    }
}

#[test]
fn wrong_k_fails_with_exit_3() {
    let o = hhk(&[
        "verify", "foc", "--k-scale", "1.5", "--paths", "2000", "--dt", "0.015625", "--outer-paths", "2", "--inner-paths", "200",
    ]);
    assert_eq!(code(&o), 3);
    let v = json(&o);
    assert_eq!(v["pass"], false);
    assert!(v["margin"].as_f64().unwrap() < 0.0);
}

#[test]
fn lattice_checks_pass() {
    let o = hhk(&["verify", "fixedpoint"]);
    assert_eq!(code(&o), 0);
    let o = hhk(&["verify", "e77", "--paths", "100", "--coarsest", "6", "--finest", "9"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn gexp_eval_catalogue() {
    let o = hhk(&["gexp", "eval", "--lo", "0", "--hi", "0", "--payoff", "terminal-b"]);
    assert_eq!(code(&o), 0);
    assert!(json(&o)["value"].as_f64().unwrap().abs() < 1e-12);
    // indicator of a positive terminal value: probability under the least favourable drift
    let o = hhk(&["gexp", "eval", "--lo", "-0.2", "--hi", "0.2", "--payoff", "indicator", "--n-steps", "4"]);
    let v = json(&o)["value"].as_f64().unwrap();
    assert!(v > 0.0 && v < 0.5);
    let o = hhk(&["gexp", "eval", "--lo", "0", "--hi", "10", "--dt", "0.5", "--payoff", "ramp"]);
    assert_eq!(code(&o), 1);
    let o = hhk(&["gexp", "eval", "--lo", "0", "--hi", "0.1", "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# hhk") && text.contains("\nvalue\n"));
}
