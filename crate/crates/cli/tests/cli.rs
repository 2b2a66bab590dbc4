use std::process::{Command, Output};

fn rspv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rspv")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let a = rspv(&["run", "--L", "2", "--kappa", "8", "--seed", "00"]);
    let b = rspv(&["run", "--L", "2", "--kappa", "8", "--seed", "00"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["step"], "PreRSPV.params");
    assert_eq!(first["seq"], 0);
    assert!(text.lines().last().unwrap().contains("PreRSPV.outcome"));
}

#[test]
fn different_seeds_give_different_transcripts() {
    let a = rspv(&["run", "--L", "2", "--kappa", "8", "--seed", "00"]);
    let b = rspv(&["run", "--L", "2", "--kappa", "8", "--seed", "01"]);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn stats_emits_a_report() {
    let out = rspv(&[
        "stats", "--L", "8", "--kappa", "16", "--sessions", "2000", "--strategy", "honest", "--seed", "ab12",
    ]);
    assert!(out.status.success());
    let r = json(&out);
    assert_eq!(r["config"]["L"], 8);
    assert_eq!(r["config"]["sessions"], 2000);
    let total: u64 = r["by_round"].as_object().unwrap().values().map(|t| t["sessions"].as_u64().unwrap()).sum();
    assert_eq!(total, 2000);
    assert!(r.get("seconds_per_session").is_none());
    let again = rspv(&[
        "stats", "--L", "8", "--kappa", "16", "--sessions", "2000", "--strategy", "honest", "--seed", "ab12", "--threads", "2",
    ]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn stats_accepts_json_strategies() {
    let out = rspv(&[
        "stats", "--sessions", "300", "--strategy", r#"{"attack":"phase_offset","f":"shift:1","g":"identity"}"#,
    ]);
    assert!(out.status.success());
    assert_eq!(json(&out)["config"]["strategy"]["f"], "shift:1");
}

#[test]
fn amplify_rejects_always_lose() {
    let out = rspv(&["amplify", "--strategy", "always_lose"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["flag"], "fail");
}

#[test]
fn amplify_accepts_honest_with_a_generous_config() {
    let cfg = r#"{"N_temp":200,"win_slack":0.2,"N_rspv":100}"#;
    let out = rspv(&["amplify", "--kappa", "32", "--config", cfg, "--cvqc"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(json(&out)["verdict"], "accept");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(rspv(&["run", "--L", "0"]).status.code(), Some(2));
    assert_eq!(rspv(&["run", "--kappa", "1"]).status.code(), Some(2));
    assert_eq!(rspv(&["run", "--strategy", "nonsense"]).status.code(), Some(2));
    assert_eq!(rspv(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rspv(&["amplify", "--config", r#"{"N_temp":0,"win_slack":0.02,"N_rspv":1}"#]).status.code(), Some(2));
    assert_eq!(rspv(&["bench", "--grid", "4,2"]).status.code(), Some(2));
    let out = rspv(&["stats", "--sessions", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sessions"));
}

#[test]
fn selftest_passes() {
    let out = rspv(&["selftest"]);
    assert!(out.status.success());
    let checks = json(&out);
    assert!(checks.as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn bench_reports_every_grid_point() {
    let out = rspv(&["bench", "--grid", "1,2,4", "--sessions", "2", "--reps", "1"]);
    assert!(out.status.success());
    let r = json(&out);
    assert_eq!(r["points"].as_array().unwrap().len(), 3);
    assert_eq!(r["growth_ratios"].as_array().unwrap().len(), 2);
}

#[test]
fn amplify_reads_session_shape_and_seed_from_a_config_file() {
    let dir = std::env::temp_dir().join(format!("rspv-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("amplify.json");
    std::fs::write(&path, r#"{"L":3,"kappa":32,"N_temp":150,"win_slack":0.2,"N_rspv":50,"seed":"0a"}"#).unwrap();
    let a = rspv(&["amplify", "--config", path.to_str().unwrap()]);
    let b = rspv(&["amplify", "--config", path.to_str().unwrap(), "--seed", "ff"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    let r = json(&a);
    assert_eq!(r["config"]["N_temp"], 150);
    if let Some(thetas) = r["thetas"].as_array() {
        assert_eq!(thetas.len(), 3);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn stats_can_print_a_table() {
    let out = rspv(&["stats", "--sessions", "200", "--human"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("quiz win rate"));
    assert!(serde_json::from_str::<serde_json::Value>(&text).is_err());
}
