//! `tollgate`: rule linting, transaction validation, scenario simulation
//! and slashing-evidence audits.
//!
//! Exit codes: 0 ok, 1 rejection (lint errors, rejected transactions,
//! invalid evidence), 2 usage or input errors, 3 internal failures.

mod fixtures;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use tollgate_core::ordering::{verify_evidence, SlashingEvidence};
use tollgate_core::rules::{lint, parse_rules, validate_semantic, RejectReason, SemDecision, Severity};
use tollgate_core::sim::{
    monte_carlo, run_scenario_rules, run_scenario_with, sweep, JsonlSink, Metrics, MonteCarlo, NullSink,
    ScenarioConfig, SweepPoint,
};

#[derive(Parser)]
#[command(name = "tollgate", version, about = "Legitimacy checks for a simulated rollup")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and schema-check a rule file.
    RulesLint {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Check transactions against a rule file and a state snapshot.
    Validate {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        txs: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Run a scenario (or a Monte Carlo batch when trials > 1).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Directory for metrics.json, events.jsonl and evidence/.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Rule file to use instead of the configured profile (single runs).
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Vary one config field and summarize each point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted config key, e.g. `oracle_delay_blocks` or `committee.t`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 10)]
        trials: u32,
        #[arg(long)]
        jobs: Option<usize>,
        /// Metrics to keep in CSV output (dotted paths); all when omitted.
        #[arg(long = "metric")]
        metrics: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: SweepFormat,
    },
    /// Check a slashing-evidence file offline.
    AuditEvidence { file: PathBuf },
    /// Render metrics.json, summary.json or sweep JSON as a table.
    Report { file: PathBuf },
}

/// Failure that is ours, not the caller's.
#[derive(Debug)]
struct Internal(anyhow::Error);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Internal {}

fn internal(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(Internal(e.into()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(internal)
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::from_toml(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn rules_lint(file: &Path, format: Format) -> Result<u8> {
    let text = read(file)?;
    let report = lint(&text);
    match format {
        Format::Table => {
            for d in &report.diagnostics {
                println!("{d}");
            }
        }
        Format::Json => {
            let diags: Vec<_> = report
                .diagnostics
                .iter()
                .map(|d| json!({"severity": d.severity.to_string(), "line": d.line, "col": d.col, "message": d.message}))
                .collect();
            let rules: Vec<_> = report
                .rules
                .iter()
                .flat_map(|rs| rs.rules())
                .map(|r| json!({"id": r.id, "function": r.signature.canonical(), "selector": r.signature.selector().to_string()}))
                .collect();
            let out = json!({"file": file.display().to_string(), "diagnostics": diags, "rules": rules});
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    let errors = report.diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
    if format == Format::Table {
        let rules = report.rules.as_ref().map_or(0, |rs| rs.rules().len());
        eprintln!("{}: {rules} rule(s), {errors} error(s)", file.display());
    }
    Ok(u8::from(report.has_errors()))
}

fn validate(rules: &Path, state: &Path, txs: &Path, format: Format) -> Result<u8> {
    let rs = parse_rules(&read(rules)?).map_err(|e| anyhow!("{}: {e}", rules.display()))?;
    let st = fixtures::load_state(&read(state)?, &rs).with_context(|| state.display().to_string())?;
    let txs = fixtures::load_txs(&read(txs)?, &rs, &st).with_context(|| txs.display().to_string())?;
    let mut rejected = 0;
    let mut rows = Vec::new();
    for t in &txs {
        let out = validate_semantic(&t.tx, &st, &rs);
        let verdict = match &out.decision {
            SemDecision::Accept => "accept".to_string(),
            SemDecision::Reject { rule_id, reason } => {
                rejected += 1;
                match reason {
                    RejectReason::Violated => format!("reject {rule_id}"),
                    RejectReason::EvalError(e) => format!("reject {rule_id} (error: {e})"),
                }
            }
        };
        match format {
            Format::Table => println!("{:<24} {verdict}", t.name),
            Format::Json => rows.push(json!({
                "name": t.name,
                "tx_id": t.tx.hash().to_string(),
                "decision": out.decision,
                "rules_evaluated": out.rules_evaluated,
                "visits": out.visits,
            })),
        }
    }
    if format == Format::Json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    }
    Ok(u8::from(rejected > 0))
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    trials: Option<u32>,
    jobs: Option<usize>,
    rules: Option<&Path>,
    format: Format,
) -> Result<u8> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    cfg.validate().map_err(|e| anyhow!("{}: {e}", config.display()))?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(internal)?;
    }
    if cfg.trials > 1 {
        if rules.is_some() {
            bail!("--rules applies to single runs only");
        }
        let mc = monte_carlo(&cfg, cfg.trials, jobs.unwrap_or_else(default_jobs)).map_err(|e| anyhow!(e))?;
        let text = mc.to_json();
        if let Some(dir) = out {
            write_file(&dir.join("summary.json"), &format!("{text}\n"))?;
        }
        match format {
            Format::Table => print!("{}", mc.table()),
            Format::Json => println!("{text}"),
        }
        return Ok(0);
    }

    let rule_set = match rules {
        Some(p) => Some(parse_rules(&read(p)?).map_err(|e| anyhow!("{}: {e}", p.display()))?),
        None => None,
    };
    let run = |sink: &mut dyn tollgate_core::sim::EventSink| match &rule_set {
        Some(rs) => run_scenario_rules(&cfg, rs, sink),
        None => run_scenario_with(&cfg, sink),
    };
    let outcome = match out {
        Some(dir) => {
            let path = dir.join("events.jsonl");
            let file = fs::File::create(&path)
                .with_context(|| format!("cannot write {}", path.display()))
                .map_err(internal)?;
            let mut sink = JsonlSink::new(BufWriter::new(file));
            let outcome = run(&mut sink).map_err(|e| anyhow!(e))?;
            sink.finish().map_err(internal)?;
            outcome
        }
        None => run(&mut NullSink).map_err(|e| anyhow!(e))?,
    };
    let text = outcome.metrics.to_json();
    if let Some(dir) = out {
        write_file(&dir.join("metrics.json"), &format!("{text}\n"))?;
        if !outcome.evidence.is_empty() {
            let ev_dir = dir.join("evidence");
            fs::create_dir_all(&ev_dir).map_err(internal)?;
            for ev in &outcome.evidence {
                let body = serde_json::to_string_pretty(ev).map_err(internal)?;
                write_file(&ev_dir.join(format!("window-{}.json", ev.window_id)), &format!("{body}\n"))?;
            }
        }
    }
    match format {
        Format::Table => print!("{}", outcome.metrics.table()),
        Format::Json => println!("{text}"),
    }
    Ok(0)
}

fn sweep_value(s: &str) -> toml::Value {
    let s = s.trim();
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

fn value_cell(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn sweep_csv(points: &[SweepPoint], keep: &[String]) -> String {
    let mut s = String::from("value,metric,mean,ci_low,ci_high,min,max\n");
    for p in points {
        for (k, v) in &p.summary.metrics {
            if !keep.is_empty() && !keep.contains(k) {
                continue;
            }
            s.push_str(&format!(
                "{},{k},{},{},{},{},{}\n",
                value_cell(&p.value),
                v.mean,
                v.ci_low,
                v.ci_high,
                v.min,
                v.max
            ));
        }
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn run_sweep(
    config: &Path,
    param: &str,
    values: &[String],
    trials: u32,
    jobs: Option<usize>,
    keep: &[String],
    out: Option<&Path>,
    format: SweepFormat,
) -> Result<u8> {
    let cfg = load_config(config)?;
    let values: Vec<toml::Value> = values.iter().map(|v| sweep_value(v)).collect();
    let points = sweep(&cfg, param, &values, trials, jobs.unwrap_or_else(default_jobs)).map_err(|e| anyhow!(e))?;
    if let Some(k) = keep.iter().find(|k| points.first().is_some_and(|p| p.summary.get(k).is_none())) {
        bail!("unknown metric `{k}`");
    }
    let text = match format {
        SweepFormat::Csv => sweep_csv(&points, keep),
        SweepFormat::Json => format!("{}\n", serde_json::to_string_pretty(&points)?),
    };
    match out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn audit_evidence(file: &Path) -> Result<u8> {
    let ev: SlashingEvidence =
        serde_json::from_str(&read(file)?).with_context(|| format!("{}: malformed evidence", file.display()))?;
    match verify_evidence(&ev) {
        Ok(()) => {
            println!("valid: window {} {:?} at index {}", ev.window_id, ev.kind, ev.index);
            Ok(0)
        }
        Err(e) => {
            println!("invalid: window {}: {e}", ev.window_id);
            Ok(1)
        }
    }
}

fn sweep_table(points: &[SweepPoint]) -> String {
    let mut s = String::new();
    for p in points {
        s.push_str(&format!("== value {} ==\n", value_cell(&p.value)));
        s.push_str(&p.summary.table());
    }
    s
}

fn report(file: &Path) -> Result<u8> {
    let text = read(file)?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("{}: not JSON", file.display()))?;
    let out = if v.get("counts").is_some() {
        serde_json::from_value::<Metrics>(v)?.table()
    } else if v.get("master_seed").is_some() {
        serde_json::from_value::<MonteCarlo>(v)?.table()
    } else if v.is_array() {
        sweep_table(&serde_json::from_value::<Vec<SweepPoint>>(v)?)
    } else {
        bail!("{}: not a metrics, summary or sweep file", file.display());
    };
    print!("{out}");
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::RulesLint { file, format } => rules_lint(&file, format),
        Cmd::Validate {
            rules,
            state,
            txs,
            format,
        } => validate(&rules, &state, &txs, format),
        Cmd::Simulate {
            config,
            out,
            seed,
            trials,
            jobs,
            rules,
            format,
        } => simulate(&config, out.as_deref(), seed, trials, jobs, rules.as_deref(), format),
        Cmd::Sweep {
            config,
            param,
            values,
            trials,
            jobs,
            metrics,
            out,
            format,
        } => run_sweep(&config, &param, &values, trials, jobs, &metrics, out.as_deref(), format),
        Cmd::AuditEvidence { file } => audit_evidence(&file),
        Cmd::Report { file } => report(&file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) if e.is::<Internal>() => {
            eprintln!("internal error: {e:#}");
            3
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    let _ = std::io::stdout().flush();
    ExitCode::from(code)
}
