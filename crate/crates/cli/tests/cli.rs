// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn ftsbox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftsbox")).args(args).env_remove("FTSBOX_SEED").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_default_params() {
    let o = ftsbox(&["verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("seed=") && out.contains("params_sha256=") && out.contains("costs_sha256="));
}

#[test]
fn verify_corrupted_delta_names_first_byte() {
    let dir = tempfile::tempdir().unwrap();
    let mut params: serde_json::Value = serde_json::from_str(&ftsbox::FieldParams::DEFAULT.to_json()).unwrap();
    params["delta"][3] = serde_json::json!(0x01);
    let file = dir.path().join("params.json");
    std::fs::write(&file, params.to_string()).unwrap();
    let o = ftsbox(&["verify", "--params", path(&file)]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("input 0x"), "{err}");
}

#[test]
fn missing_params_file_is_a_usage_error() {
    let o = ftsbox(&["verify", "--params", "/nonexistent/params.json"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&ftsbox(&["verify", "--no-such-flag"])), 2);
    assert_eq!(code(&ftsbox(&["campaign", "--design", "quad"])), 2);
}

#[test]
fn hfs_transient_campaign_holds_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (j1, c1) = (dir.path().join("a.json"), dir.path().join("a.csv"));
    let (j2, c2) = (dir.path().join("b.json"), dir.path().join("b.csv"));
    let o = ftsbox(&["campaign", "--design", "hfs", "--fault", "transient", "--exhaustive", "--out-json", path(&j1), "--out-csv", path(&c1)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = ftsbox(&["campaign", "--design", "hfs", "--exhaustive", "--jobs", "2", "--out-json", path(&j2), "--out-csv", path(&c2)]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());
    assert_eq!(std::fs::read(&j1).unwrap(), std::fs::read(&j2).unwrap());
    let result: serde_json::Value = serde_json::from_slice(&std::fs::read(&j1).unwrap()).unwrap();
    assert_eq!(result["counts"]["silent_data_corruption"], 0);
    for key in ["tool", "seed", "params_sha256", "costs_sha256"] {
        assert!(result["run_info"][key].is_string(), "{key}");
    }
    let csv = std::fs::read_to_string(&c1).unwrap();
    assert!(csv.starts_with("# "));
    assert_eq!(csv.lines().nth(1), Some("site,model,duration,start,classification,stalls"));
}

#[test]
fn original_campaign_violates_the_guarantee() {
    let o = ftsbox(&["campaign", "--design", "original", "--fault", "transient"]);
    assert_eq!(code(&o), 1);
    assert!(!String::from_utf8_lossy(&o.stdout).contains("sdc=0 "));
}

#[test]
fn sampled_campaign_honors_seed_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scheme":"tmr","fault":"permanent","sample":40,"seed":17}"#).unwrap();
    let out = dir.path().join("r.json");
    let o = ftsbox(&["campaign", "--config", path(&cfg), "--out-json", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(r["design"], "tmr");
    assert_eq!(r["seed"], 17);
    assert_eq!(r["total_runs"], 40);
    std::fs::write(&cfg, r#"{"scheme":"tmr","typo":1}"#).unwrap();
    assert_eq!(code(&ftsbox(&["campaign", "--config", path(&cfg)])), 2);
    let o = ftsbox(&["campaign", "--design", "ttr", "--sample", "30", "--seed", "0x10"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("seed=16"));
}

#[test]
fn report_formats_agree() {
    let csv = ftsbox(&["report", "--format", "csv"]);
    let json = ftsbox(&["report", "--format", "json"]);
    assert_eq!((code(&csv), code(&json)), (0, 0));
    let csv = String::from_utf8(csv.stdout).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (line, row) in rows.iter().zip(json["rows"].as_array().unwrap()) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], row["design"]);
        assert_eq!(cells[1].parse::<f64>().unwrap(), row["area_ge"].as_f64().unwrap());
        assert_eq!(cells[5].parse::<f64>().unwrap(), row["throughput_norm"].as_f64().unwrap());
    }
    assert_eq!(json["rows"][0]["design"], "original");
    assert_eq!(json["rows"][0]["area_ovh_pct"].as_f64(), Some(0.0));
    assert!(json["run_info"]["costs_sha256"].is_string());
}

#[test]
fn report_with_custom_cost_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut costs = ftsbox::CostTableExact::normalized();
    costs.register_bit_ge = num_rational::Rational64::new(11, 2);
    let file = dir.path().join("costs.json");
    std::fs::write(&file, costs.to_json()).unwrap();
    let o = ftsbox(&["report", "--format", "json", "--costs", path(&file)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let custom: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let base: serde_json::Value = serde_json::from_slice(&ftsbox(&["report", "--format", "json"]).stdout).unwrap();
    let area = |v: &serde_json::Value, i: usize| v["rows"][i]["area_ge"].as_f64().unwrap();
    assert_ne!(area(&custom, 0), area(&base, 0));
    // rows: original, hfs, tmr, ttr
    assert!(area(&custom, 0) < area(&custom, 3) && area(&custom, 3) < area(&custom, 1) && area(&custom, 1) < area(&custom, 2));
    assert_ne!(custom["run_info"]["costs_sha256"], base["run_info"]["costs_sha256"]);
}

#[test]
fn synth_and_simulate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.json");
    assert_eq!(code(&ftsbox(&["synth", "--stages", "4", "--out", path(&design)])), 0);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&design).unwrap()).unwrap();
    assert_eq!(doc["n_stages"], 4);
    assert!(doc["run_info"]["params_sha256"].is_string());

    let faults = dir.path().join("faults.json");
    std::fs::write(&faults, r#"[{"site":{"kind":"register_bit","stage":0,"bit":0,"replica":0},"model":"bit_flip","start_cycle":1,"duration":2}]"#).unwrap();
    let o = ftsbox(&["simulate", "--design", "hfs", "--inputs", "00,53", "--fault-file", path(&faults)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines[0]["run_info"]["seed"].is_string());
    let outs: Vec<u64> = lines[1..].iter().filter_map(|r| r["output"].as_u64()).collect();
    assert_eq!(outs, vec![0x63, 0xed]);
    assert_eq!(lines[1..].iter().filter(|r| r["Err"] == true).count(), 2);

    std::fs::write(&faults, r#"[{"site":{"kind":"comparator_output","stage":0},"model":"stuck_at_1","start_cycle":0,"duration":1}]"#).unwrap();
    assert_eq!(code(&ftsbox(&["simulate", "--design", "tmr", "--fault-file", path(&faults)])), 2);
}
