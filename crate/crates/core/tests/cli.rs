use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hlcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlcp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_json(o: &Output) -> Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(text.trim()).unwrap_or_else(|_| panic!("stderr not JSON: {text}"))
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn geometry_writes_csv_to_stdout() {
    let o = hlcp(&["geometry"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# command: geometry"));
    let rows = data_lines(&text);
    assert!(rows[0].starts_with("delta_x,delta_y,p_marginal,p_effective,p_new,slippage"));
    assert_eq!(rows.len(), 9);
}

#[test]
fn game_sweep_covers_grid() {
    let o = hlcp(&["game", "--sweep", "X=1e3..1e12"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows = data_lines(&text);
    assert_eq!(rows[0], "W,X,N,sigma,r_c,F_max,T,pi_std_std,pi_hlcp_std,pi_std_hlcp,pi_hlcp_hlcp,nash_profile");
    assert_eq!(rows.len(), 11);
    assert!(rows.last().unwrap().ends_with("hlcp/hlcp"));
}

#[test]
fn trigger_json_has_metadata_and_data() {
    let o = hlcp(&["--format", "json", "trigger"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["metadata"]["command"], "trigger");
    assert_eq!(v["metadata"]["config_sha256"].as_str().unwrap().len(), 64);
    assert!(v["data"].as_array().unwrap().len() > 1);
}

#[test]
fn stress_writes_series_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/run.csv");
    let o = hlcp(&["--seed", "7", "--out", out.to_str().unwrap(), "stress"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# seed: 7"));
    let rows = data_lines(&text);
    assert_eq!(rows[0], "t_hours,price,variance,phi,loss_std,loss_hlcp,undeployed_share");
    assert_eq!(rows.len(), 7202);
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("nested/run.summary.json")).unwrap())
            .unwrap();
    assert!(summary["summary"]["crash"]["reduction_24h"].as_f64().unwrap() > 0.0);
}

#[test]
fn stress_ensemble_rows() {
    let o = hlcp(&["stress", "--paths", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data_lines(&text);
    assert!(rows[0].starts_with("stream,final_loss_std,final_loss_hlcp,reduction"));
    assert_eq!(rows.len(), 4);
    let seq = hlcp(&["--sequential", "stress", "--paths", "3"]);
    assert_eq!(o.stdout, seq.stdout);
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "command = \"game\"\n[params]\nsigmaa = 0.5\n").unwrap();
    let o = hlcp(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("sigmaa"));
}

#[test]
fn config_and_subcommand_must_agree() {
    let cfg = configs_dir().join("stress.toml");
    let o = hlcp(&["--config", cfg.to_str().unwrap(), "game"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exploding_price_is_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("boom.json");
    std::fs::write(&cfg, r#"{"command":"stress","params":{"svj":{"mu":-1e7}}}"#).unwrap();
    let o = hlcp(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let e = error_json(&o);
    assert_eq!(e["error"]["kind"], "numeric");
    assert_eq!(e["error"]["step"], 0);
}

#[test]
fn backtest_from_price_file() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("px.csv");
    let mut csv = String::from("date,close\n");
    let d0 = chrono::NaiveDate::from_ymd_opt(2025, 1, 1).unwrap();
    for i in 0..60i64 {
        let d = d0 + chrono::Duration::days(i);
        csv.push_str(&format!("{d},{}\n", 3000.0 * (1.0 + 0.02 * ((i % 5) as f64 - 2.0))));
    }
    std::fs::write(&prices, csv).unwrap();
    let o = hlcp(&[
        "backtest",
        "--prices",
        prices.to_str().unwrap(),
        "--n-ratio",
        "0.25",
        "--constant-vol",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows = data_lines(&text);
    assert_eq!(rows[0], "date,net_yield_std,net_yield_hlcp,cum_lvr_drag,cum_fees");
    assert_eq!(rows.len(), 61);
    assert!(rows[1].starts_with("2025-01-01,"));
    assert!(text.contains("\"n_ratio\":0.25"));
}

#[test]
fn backtest_duplicate_date_names_row() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("px.csv");
    std::fs::write(&prices, "date,close\n2025-01-01,1\n2025-01-01,2\n").unwrap();
    let o = hlcp(&["backtest", "--prices", prices.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("2025-01-01"));
}

#[test]
fn shipped_configs_parse() {
    for name in ["stress.toml", "game_sweep.toml", "backtest.toml"] {
        let cfg = hlcp::experiment::ExperimentConfig::load(&configs_dir().join(name))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        if cfg.command != hlcp::experiment::Command::Backtest {
            hlcp::experiment::run(&cfg, hlcp::Execution::Sequential)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
