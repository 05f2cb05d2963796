use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> String {
    root().join("fixtures").join(rel).to_string_lossy().into_owned()
}

fn tollgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tollgate")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn lint_fund_rules_is_clean() {
    let o = tollgate(&["rules-lint", &fixture("rules/fund.rules")]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("2 rule(s), 0 error(s)"));
    let out = stdout(&o);
    assert!(out.contains("rule `whitelist` on transfer(address,uint256) complexity="));
    assert!(out.contains("selector 0xa9059cbb (transfer(address,uint256)) rules=2"));
}

#[test]
fn lint_flags_nonlinear_terms() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.rules");
    fs::write(&p, "map M: address -> int\nrule bad on transfer(address to, uint256 amount): amount * amount <= 5\n").unwrap();
    let o = tollgate(&["rules-lint", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).starts_with("error:2:"));
    assert!(stdout(&o).contains("linearity error"));
}

#[test]
fn lint_empty_and_unreadable() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.rules");
    fs::write(&p, "").unwrap();
    let o = tollgate(&["rules-lint", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("0 rule(s), 0 error(s)"));
    let o = tollgate(&["rules-lint", dir.path().join("missing.rules").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn lint_json_lists_rules() {
    let o = tollgate(&["rules-lint", &fixture("rules/aml.rules"), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let ids: Vec<&str> = v["rules"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["threshold", "volume", "sanctions"]);
}

#[test]
fn validate_aml_golden() {
    let o = tollgate(&[
        "validate",
        "--rules",
        &fixture("rules/aml.rules"),
        "--state",
        &fixture("state/aml.toml"),
        "--txs",
        &fixture("txs/aml.toml"),
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(
        stdout(&o),
        "below-threshold          accept\n\
         over-threshold-no-edd    reject threshold\n\
         over-threshold-edd       accept\n\
         sanctioned-recipient     reject sanctions\n\
         daily-volume             reject volume\n"
    );
}

#[test]
fn validate_fund_golden() {
    let o = tollgate(&[
        "validate",
        "--rules",
        &fixture("rules/fund.rules"),
        "--state",
        &fixture("state/fund.toml"),
        "--txs",
        &fixture("txs/fund.toml"),
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(
        stdout(&o),
        "whitelist-miss           reject whitelist\n\
         over-theta-max           reject concentration\n\
         compliant                accept\n\
         up-to-theta-max          accept\n"
    );
}

#[test]
fn validate_all_accepted_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let txs = dir.path().join("ok.toml");
    fs::write(&txs, "[[tx]]\nsender = \"alice\"\nfunction = \"transfer\"\nparams = { to = \"carol\", amount = 1 }\n").unwrap();
    let o = tollgate(&[
        "validate",
        "--rules",
        &fixture("rules/fund.rules"),
        "--state",
        &fixture("state/fund.toml"),
        "--txs",
        txs.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["decision"]["decision"], "accept");
    assert_eq!(v[0]["rules_evaluated"], 2);
}

#[test]
fn validate_schema_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.toml");
    fs::write(&state, "[maps.Undeclared]\nalice = 1\n").unwrap();
    let o = tollgate(&[
        "validate",
        "--rules",
        &fixture("rules/aml.rules"),
        "--state",
        state.to_str().unwrap(),
        "--txs",
        &fixture("txs/aml.toml"),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not declared"));

    let txs = dir.path().join("txs.toml");
    fs::write(&txs, "[[tx]]\nsender = \"alice\"\nfunction = \"transfer\"\nparams = { to = 5, amount = 1 }\n").unwrap();
    let o = tollgate(&[
        "validate",
        "--rules",
        &fixture("rules/aml.rules"),
        "--state",
        &fixture("state/aml.toml"),
        "--txs",
        txs.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&tollgate(&["frobnicate"])), 2);
    assert_eq!(code(&tollgate(&["validate", "--rules", "x"])), 2);
    assert_eq!(code(&tollgate(&["--help"])), 0);
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "dependency_intensity = 0.9\n").unwrap();
    let o = tollgate(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dependency_intensity"));
    fs::write(&cfg, "no_such_field = 1\n").unwrap();
    assert_eq!(code(&tollgate(&["simulate", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn honest_scenario_settles_everything() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = tollgate(&["simulate", "--config", &fixture("scenarios/honest.cfg"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["counts"]["settle_failed"], 0);
    assert!(m["counts"]["settled"].as_u64().unwrap() > 0);
    assert_eq!(m["fairness"]["violations"], 0);
    assert!(!out.join("evidence").exists());
    let events = fs::read_to_string(out.join("events.jsonl")).unwrap();
    let parsed = tollgate_core::sim::parse_jsonl(&events).unwrap();
    tollgate_core::sim::audit_stage_order(&parsed).unwrap();

    // report re-renders the same table simulate printed
    let r = tollgate(&["report", out.join("metrics.json").to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    assert_eq!(stdout(&r), stdout(&o));
}

#[test]
fn byzantine_oracle_scenario_reports_the_bound() {
    let o = tollgate(&["simulate", "--config", &fixture("scenarios/byzantine_oracle.cfg")]);
    assert_eq!(code(&o), 0);
    let line = stdout(&o).lines().find(|l| l.starts_with("bound eps+eta")).unwrap().to_string();
    assert!(line.contains("0.010000"), "{line}");
    assert!(line.ends_with("within"), "{line}");
}

#[test]
fn mev_scenario_evidence_audits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = tollgate(&["simulate", "--config", &fixture("scenarios/mev.cfg"), "--out", out.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["fairness"]["beta_hat"], 0.0);
    let sl = &m["slashing"];
    assert!(sl["events"].as_u64().unwrap() > 0);
    assert_eq!(sl["events"], sl["deviations_injected"]);
    assert_eq!(sl["verified"], sl["events"]);
    assert_eq!(sl["false_evidence"], 0);

    let files: Vec<PathBuf> = fs::read_dir(out.join("evidence")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len() as u64, sl["events"].as_u64().unwrap());
    for f in &files {
        let a = tollgate(&["audit-evidence", f.to_str().unwrap()]);
        assert_eq!(code(&a), 0, "{}", stdout(&a));
        assert!(stdout(&a).starts_with("valid"));
    }

    // one altered byte in comm
    let mut ev: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
    let comm = ev["comm"].as_str().unwrap().to_string();
    let last = if comm.ends_with('0') { '1' } else { '0' };
    ev["comm"] = format!("{}{last}", &comm[..comm.len() - 1]).into();
    let tampered = dir.path().join("tampered.json");
    fs::write(&tampered, ev.to_string()).unwrap();
    let a = tollgate(&["audit-evidence", tampered.to_str().unwrap()]);
    assert_eq!(code(&a), 1);
    assert!(stdout(&a).starts_with("invalid"));

    let junk = dir.path().join("junk.json");
    fs::write(&junk, "{\"window_id\": 1}").unwrap();
    assert_eq!(code(&tollgate(&["audit-evidence", junk.to_str().unwrap()])), 2);
}

#[test]
fn monte_carlo_summary_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, "duration_windows = 60\ntps = 4.0\n").unwrap();
    let out = dir.path().join("mc");
    let o = tollgate(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "3",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("trials 3"));
    let r = tollgate(&["report", out.join("summary.json").to_str().unwrap()]);
    assert_eq!(stdout(&r), stdout(&o));
}

#[test]
fn sweep_emits_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, "duration_windows = 60\ntps = 4.0\nmode = \"baseline\"\n").unwrap();
    let o = tollgate(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "oracle_delay_blocks",
        "--values",
        "0,2",
        "--trials",
        "2",
        "--metric",
        "cache.stale_serves",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "value,metric,mean,ci_low,ci_high,min,max");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,cache.stale_serves,0,"));

    let json_out = dir.path().join("sweep.json");
    let o = tollgate(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "committee.t",
        "--values",
        "2,4",
        "--trials",
        "2",
        "--format",
        "json",
        "--out",
        json_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = tollgate(&["report", json_out.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    assert!(stdout(&r).contains("== value 4 =="));

    let bad = tollgate(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "nope", "--values", "1"]);
    assert_eq!(code(&bad), 2);
}
