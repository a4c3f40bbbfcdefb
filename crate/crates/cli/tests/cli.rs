use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn quack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quack")).args(args).output().expect("binary runs")
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(p).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr is json")
}

#[test]
fn rule_max_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("max.json");
    let o = quack(&["rule", "max", "--epsilon", "0.6667", "--grid", "4096", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let d = json_file(&out);
    let last = d["grid"].as_array().unwrap().last().unwrap();
    assert_eq!(last[0].as_f64().unwrap(), 1.0);
    assert!((last[1].as_f64().unwrap() - 0.7778).abs() < 1e-4);
    let meta = &d["metadata"];
    for k in ["version", "options", "seed", "convention"] {
        assert!(meta.get(k).is_some(), "metadata lacks {k}");
    }
    assert_eq!(meta["options"]["grid"], 4096);
}

#[test]
fn rule_file_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert!(quack(&["rule", "max", "--epsilon", "0.3", "--out", out.to_str().unwrap()]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let rule = quack_core::rules::PiecewiseRule::from_json(&text).unwrap();
    let direct = quack_core::rules::build_max_rule(0.3, 4096).unwrap();
    assert_eq!(rule.nodes(), direct.nodes());
    assert_eq!(rule.values(), direct.values());
}

#[test]
fn verify_indifference_passes_for_max_rule() {
    let dir = tempfile::tempdir().unwrap();
    let rule = dir.path().join("r.json");
    let rep = dir.path().join("v.json");
    assert!(quack(&["rule", "max", "--epsilon", "0.5", "--out", rule.to_str().unwrap()]).status.success());
    let o = quack(&["verify", "indifference", "--rule", rule.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let d = json_file(&rep);
    assert!(d["spread"].as_f64().unwrap() <= 1e-4);
    assert_eq!(d["payoffs"].as_array().unwrap().len(), 201);
}

#[test]
fn verify_flags_coin_flip_judge() {
    let dir = tempfile::tempdir().unwrap();
    let rule = dir.path().join("u.json");
    let r = quack_core::rules::uniform_rule(0.3).unwrap();
    fs::write(&rule, r.to_json().to_string()).unwrap();
    let o = quack(&["verify", "indifference", "--rule", rule.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["kind"], "check_failed");
}

#[test]
fn verify_mc_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let rule = dir.path().join("r.json");
    assert!(quack(&["rule", "max", "--epsilon", "0.4", "--out", rule.to_str().unwrap()]).status.success());
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o = quack(&[
            "verify", "indifference", "--rule", rule.to_str().unwrap(), "--method", "mc",
            "--samples", "100000", "--grid", "5", "--seed", "3", "--out", p.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        json_file(&p)
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(a["payoffs"], b["payoffs"]);
    assert_eq!(a["metadata"]["seed"], 3);
}

#[test]
fn simulate_is_reproducible_with_default_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let rule = dir.path().join("rule.json");
    let prof = dir.path().join("profile.json");
    fs::write(&cfg, r#"{"epsilon_bar": 0.3}"#).unwrap();
    assert!(quack(&["rule", "max", "--epsilon", "0.3", "--out", rule.to_str().unwrap()]).status.success());
    fs::write(&prof, r#"{"expert": {"kind": "truthful"}, "quack": {"kind": "uniform", "a": 1.0}, "judge": "rule.json"}"#).unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o = quack(&[
            "simulate", "--config", cfg.to_str().unwrap(), "--profile", prof.to_str().unwrap(),
            "--rounds", "200000", "--out", p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        json_file(&p)
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(a["metadata"]["seed"], 0);
    assert_eq!(a["quack_win_rate"], b["quack_win_rate"]);
    let pi = 0.15 - 0.09 / 6.0;
    let est = &a["quack_win_rate"];
    assert!((est["value"].as_f64().unwrap() - pi).abs() < 5.0 * est["stderr"].as_f64().unwrap());
}

#[test]
fn bad_config_exits_one_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"epsilon_bar": 1.5}"#).unwrap();
    let o = quack(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_json(&o)["error"]["message"].is_string());
}

#[test]
fn noise_nonconvergence_exits_two() {
    let o = quack(&["ext", "noise", "--max-iter", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "non_convergence");
    assert!(e["error"]["detail"]["residual"].as_f64().unwrap() > 1e-4);
}

#[test]
fn metrics_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    assert!(quack(&["metrics", "--epsilon-grid", "0.1:0.5:0.1", "--out", out.to_str().unwrap()]).status.success());
    let (header, rows) = csv_rows(&out);
    assert_eq!(header[0], "epsilon_bar");
    assert_eq!(rows.len(), 5);
    for r in &rows {
        let e = r[0];
        assert!((r[4] - (1.0 - e + e * e / 3.0)).abs() < 1e-15);
    }
    assert!(dir.path().join("m.csv.meta.json").exists());
}

#[test]
fn fig4_series_are_monotone_and_below_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    assert!(quack(&["figures", "fig4", "--out", dir.path().to_str().unwrap()]).status.success());
    let (header, rows) = csv_rows(&dir.path().join("fig4.csv"));
    assert_eq!(header.len(), 7);
    for c in 1..6 {
        for w in rows.windows(2) {
            assert!(w[1][c] >= w[0][c] - 1e-9, "{} not monotone at m = {}", header[c], w[1][0]);
        }
        for r in &rows {
            assert!(r[c] <= r[6] + 1e-9, "{} above the limit at m = {}", header[c], r[0]);
        }
    }
}

#[test]
fn fig5_flat_levels() {
    let dir = tempfile::tempdir().unwrap();
    assert!(quack(&["figures", "fig5", "--out", dir.path().to_str().unwrap()]).status.success());
    let (_, rows) = csv_rows(&dir.path().join("fig5.csv"));
    let mid = rows.iter().find(|r| r[0] == 0.0).unwrap();
    assert!((mid[1] - 0.75).abs() < 1e-12);
    assert!((mid[2] - 0.375).abs() < 1e-12);
}

#[test]
fn fig2_is_flagged_extrapolated() {
    let dir = tempfile::tempdir().unwrap();
    assert!(quack(&["figures", "fig2", "--out", dir.path().to_str().unwrap()]).status.success());
    let meta = json_file(&dir.path().join("fig2.csv.meta.json"));
    assert_eq!(meta["metadata"]["options"]["series"]["extrapolated"], true);
}

#[test]
fn ext_commands_emit_conventions() {
    for args in [
        vec!["ext", "identity", "--p1", "0.55", "--epsilon", "0.25"],
        vec!["ext", "sequential", "--epsilon", "0.2"],
        vec!["ext", "one-speaker", "--q", "0.5", "--u", "0.8"],
    ] {
        let o = quack(&args);
        assert!(o.status.success(), "{args:?}");
        let d: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(d["metadata"]["convention"].is_object(), "{args:?}");
    }
    let o = quack(&["ext", "identity", "--p1", "0.55", "--epsilon", "0.25"]);
    let d: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((d["m_bar"].as_f64().unwrap() - 9.0 / 11.0).abs() < 1e-12);
    assert_eq!(d["regime"], "moderate");
}
