//! Append-only event log.
//!
//! One JSON object per line:
//! `{"ts": <sim µs>, "tx_id": "0x…"?, "window": <id>?, "stage": <stage>, "outcome": <text>}`.
//! Per-transaction stages: `submit`, `syn`, `sem`, `state`, `order`, `execute`,
//! `settle`. Per-window stages (no `tx_id`): `commit` (outcome is the
//! commitment hash), `verify` (`released`, `slashed:<kind>` or
//! `threshold_unmet`).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chain::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Submit,
    Syn,
    Sem,
    State,
    Order,
    Commit,
    Verify,
    Execute,
    Settle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub ts: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_id: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    pub stage: Stage,
    pub outcome: String,
}

pub trait EventSink {
    fn record(&mut self, e: Event);
}

pub struct NullSink;

impl EventSink for NullSink {
    fn record(&mut self, _: Event) {}
}

impl EventSink for Vec<Event> {
    fn record(&mut self, e: Event) {
        self.push(e);
    }
}

/// Writes JSON lines; the first I/O error is kept and later events dropped.
pub struct JsonlSink<W: Write> {
    out: W,
    pub error: Option<std::io::Error>,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        JsonlSink { out, error: None }
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> EventSink for JsonlSink<W> {
    fn record(&mut self, e: Event) {
        if self.error.is_some() {
            return;
        }
        let line = serde_json::to_string(&e).expect("event serializes");
        if let Err(err) = writeln!(self.out, "{line}") {
            self.error = Some(err);
        }
    }
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Event>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// Checks stage ordering in a guarded-mode log: a transaction is ordered
/// only after passing `syn`, `sem` and `state`, and executes only after its
/// window's commitment is published and its release verified.
pub fn audit_stage_order(events: &[Event]) -> Result<(), String> {
    let mut passed: BTreeMap<Digest, BTreeSet<Stage>> = BTreeMap::new();
    let mut window_of: BTreeMap<Digest, u64> = BTreeMap::new();
    let mut committed = BTreeSet::new();
    let mut verified = BTreeSet::new();
    for (line, e) in events.iter().enumerate() {
        let at = |msg: String| Err(format!("event {line}: {msg}"));
        match (e.stage, e.tx_id) {
            (Stage::Commit, None) => {
                committed.insert(e.window);
            }
            (Stage::Verify, None) => {
                if !committed.contains(&e.window) {
                    return at(format!("window {:?} verified before its commitment", e.window));
                }
                if e.outcome == "released" || e.outcome.starts_with("slashed") {
                    verified.insert(e.window);
                }
            }
            (Stage::Syn | Stage::Sem | Stage::State, Some(id)) if e.outcome == "pass" => {
                passed.entry(id).or_default().insert(e.stage);
            }
            (Stage::Order, Some(id)) => {
                let p = passed.get(&id);
                if ![Stage::Syn, Stage::Sem, Stage::State].iter().all(|s| p.is_some_and(|p| p.contains(s))) {
                    return at(format!("{id} ordered before passing plaintext validation"));
                }
                if let Some(w) = e.window {
                    window_of.insert(id, w);
                }
            }
            (Stage::Execute, Some(id)) => {
                let w = window_of.get(&id).copied();
                if w.is_none() || !verified.contains(&w) {
                    return at(format!("{id} executed before its window was committed and verified"));
                }
            }
            _ => {}
        }
    }
    Ok(())
}
