use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::{Address, DependencyRead, Digest, ExecError, L1View, L2State, SlotKey, SlotValue, Transaction};

/// One slot where the value execution assumed differs from confirmed L1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub addr: Address,
    pub key: SlotKey,
    pub v_proj: SlotValue,
    pub v_act: SlotValue,
}

#[derive(Debug, Clone)]
pub struct SandboxTx {
    pub tx_id: Digest,
    /// The tx's own read trace, or the error it hit.
    pub outcome: Result<Vec<DependencyRead>, ExecError>,
}

#[derive(Debug, Clone)]
pub struct SandboxResult {
    pub projected: L2State,
    /// Union of the successful transactions' reads, one per slot, in first-read order.
    pub deps: Vec<DependencyRead>,
    pub per_tx: Vec<SandboxTx>,
}

impl SandboxResult {
    pub fn failed(&self) -> impl Iterator<Item = (usize, &ExecError)> {
        self.per_tx
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.outcome.as_ref().err().map(|e| (i, e)))
    }
}

/// Executes `batch` in order on a scratch copy of `s`, reading L1 through `view`.
pub fn sandbox_execute(batch: &[Transaction], s: &L2State, view: &dyn L1View) -> SandboxResult {
    let mut projected = s.clone();
    let mut deps: Vec<DependencyRead> = Vec::new();
    let mut seen: BTreeMap<(Address, SlotKey), ()> = BTreeMap::new();
    let mut per_tx = Vec::with_capacity(batch.len());
    for tx in batch {
        let outcome = projected.apply(tx, view).map(|dep| {
            for r in &dep.required {
                if seen.insert((r.contract, r.key), ()).is_none() {
                    deps.push(*r);
                }
            }
            dep.required
        });
        per_tx.push(SandboxTx {
            tx_id: tx.hash(),
            outcome,
        });
    }
    SandboxResult {
        projected,
        deps,
        per_tx,
    }
}

/// The difference set, sorted by address then key.
pub fn compute_diff(deps: &[DependencyRead], l1: &dyn L1View) -> Vec<DiffEntry> {
    let mut out: Vec<DiffEntry> = deps
        .iter()
        .filter_map(|d| {
            let v_act = l1.read(&d.contract, &d.key);
            (v_act != d.value).then_some(DiffEntry {
                addr: d.contract,
                key: d.key,
                v_proj: d.value,
                v_act,
            })
        })
        .collect();
    out.sort_by_key(|e| (e.addr, e.key));
    out.dedup_by_key(|e| (e.addr, e.key));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotClass {
    Eligibility,
    Balance,
    Oracle,
    Informational,
}

/// Weight table and thresholds for [`decide`]. Contracts are classified
/// as a whole; unlisted contracts are informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityConfig {
    pub eligibility_weight: f64,
    pub balance_weight: f64,
    /// Points per basis point of relative drift.
    pub oracle_weight_per_bp: f64,
    pub informational_weight: f64,
    pub theta_delay: f64,
    pub theta_reject: f64,
    pub classes: BTreeMap<Address, SlotClass>,
}

impl Default for SeverityConfig {
    fn default() -> Self {
        SeverityConfig {
            eligibility_weight: 100.0,
            balance_weight: 100.0,
            oracle_weight_per_bp: 1.0,
            informational_weight: 1.0,
            theta_delay: 10.0,
            theta_reject: 100.0,
            classes: BTreeMap::new(),
        }
    }
}

impl SeverityConfig {
    pub fn with_class(mut self, contract: Address, class: SlotClass) -> Self {
        self.classes.insert(contract, class);
        self
    }

    pub fn class_of(&self, contract: &Address) -> SlotClass {
        self.classes.get(contract).copied().unwrap_or(SlotClass::Informational)
    }

    pub fn validate(&self) -> Result<(), String> {
        let weights = [
            self.eligibility_weight,
            self.balance_weight,
            self.oracle_weight_per_bp,
            self.informational_weight,
        ];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("severity weights must be finite and non-negative".into());
        }
        if !(self.theta_delay.is_finite() && self.theta_reject.is_finite() && 0.0 < self.theta_delay && self.theta_delay <= self.theta_reject) {
            return Err("thresholds must satisfy 0 < theta_delay <= theta_reject".into());
        }
        Ok(())
    }

    pub fn entry_score(&self, e: &DiffEntry) -> f64 {
        match self.class_of(&e.addr) {
            SlotClass::Eligibility => self.eligibility_weight,
            SlotClass::Balance => self.balance_weight,
            SlotClass::Informational => self.informational_weight,
            SlotClass::Oracle => match (e.v_proj.to_u128(), e.v_act.to_u128()) {
                (Some(p), Some(a)) => self.oracle_weight_per_bp * drift_bps(p, a),
                // Values beyond 128 bits are not prices; treat as critical.
                _ => self.theta_reject,
            },
        }
    }
}

/// Relative drift of `actual` against `projected`, in basis points.
pub fn drift_bps(projected: u128, actual: u128) -> f64 {
    let diff = projected.abs_diff(actual) as f64;
    diff * 10_000.0 / projected.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Delay,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub severity_score: f64,
    pub triggering_entries: Vec<DiffEntry>,
}

pub fn decide(delta: &[DiffEntry], weights: &SeverityConfig) -> Decision {
    let score: f64 = delta.iter().map(|e| weights.entry_score(e)).sum();
    let verdict = if delta.is_empty() || score < weights.theta_delay {
        Verdict::Accept
    } else if score < weights.theta_reject {
        Verdict::Delay
    } else {
        Verdict::Reject
    };
    Decision {
        verdict,
        severity_score: score,
        triggering_entries: delta.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Function, L1Bindings, L1State, Message, Meta, Signature, Value, Word};

    fn oracle() -> (Address, SlotKey) {
        (Address::from_label("oracle"), Word::named("price"))
    }

    fn weights() -> SeverityConfig {
        SeverityConfig::default()
            .with_class(oracle().0, SlotClass::Oracle)
            .with_class(Address::from_label("kyc"), SlotClass::Eligibility)
    }

    fn state() -> L2State {
        let mut s = L2State::default();
        s.bindings = L1Bindings {
            price_feed: Some(oracle()),
            kyc_registry: None,
        };
        for who in ["a", "b", "c"] {
            s.balances.insert(Address::from_label(who), 1000);
        }
        s
    }

    fn tx(sender: &str, nonce: u64, f: Function, to: &str, amount: i64) -> Transaction {
        Transaction {
            msg: Message::new(Address::from_label("token"), f.selector())
                .with_param("to", Value::Addr(Address::from_label(to)))
                .with_param("amount", Value::Int(amount)),
            sig: Signature([0; 32]),
            meta: Meta {
                arrival_ts: 1,
                nonce,
                gas: 1,
                sender: Address::from_label(sender),
            },
        }
    }

    fn l1_with_price(p: u128) -> L1State {
        let mut l1 = L1State::default();
        l1.set(oracle().0, oracle().1, Word::from_u128(p));
        l1
    }

    #[test]
    fn pure_transfers_have_no_dependencies() {
        let s = state();
        let r = sandbox_execute(
            &[tx("a", 0, Function::Transfer, "b", 5), tx("b", 0, Function::Transfer, "c", 5)],
            &s,
            &l1_with_price(1000),
        );
        assert!(r.deps.is_empty());
        assert_eq!(r.failed().count(), 0);
        assert_eq!(r.projected.balance(&Address::from_label("c")), 1005);
        assert_eq!(s.balance(&Address::from_label("c")), 1000);
    }

    #[test]
    fn shared_reads_appear_once_with_seen_value() {
        let l1 = l1_with_price(1000);
        let batch = [tx("a", 0, Function::BridgeMint, "b", 5), tx("b", 0, Function::BridgeMint, "c", 7)];
        let r = sandbox_execute(&batch, &state(), &l1);
        let expected = DependencyRead {
            contract: oracle().0,
            key: oracle().1,
            value: Word::from_u128(1000),
        };
        assert_eq!(r.deps, vec![expected]);
        // Equals each tx's instrumented trace.
        for t in &r.per_tx {
            assert_eq!(t.outcome.as_ref().unwrap(), &vec![expected]);
        }
    }

    #[test]
    fn sandbox_flags_failures() {
        let r = sandbox_execute(&[tx("a", 0, Function::Transfer, "b", 5000)], &state(), &l1_with_price(1));
        assert_eq!(r.failed().count(), 1);
    }

    #[test]
    fn diff_cases() {
        let dep = DependencyRead {
            contract: oracle().0,
            key: oracle().1,
            value: Word::from_u128(1000),
        };
        assert!(compute_diff(&[dep], &l1_with_price(1000)).is_empty());
        assert!(compute_diff(&[], &l1_with_price(1000)).is_empty());
        assert_eq!(
            compute_diff(&[dep], &l1_with_price(1010)),
            vec![DiffEntry {
                addr: oracle().0,
                key: oracle().1,
                v_proj: Word::from_u128(1000),
                v_act: Word::from_u128(1010)
            }]
        );
    }

    #[test]
    fn diff_is_sorted() {
        let deps: Vec<DependencyRead> = (0..5u128)
            .rev()
            .map(|i| DependencyRead {
                contract: Address::from_label(&format!("c{}", i % 2)),
                key: Word::from_u128(i),
                value: Word::from_u128(1),
            })
            .collect();
        let d = compute_diff(&deps, &L1State::default());
        assert_eq!(d.len(), 5);
        assert!(d.windows(2).all(|w| (w[0].addr, w[0].key) < (w[1].addr, w[1].key)));
    }

    #[test]
    fn decision_table() {
        let w = weights();
        assert_eq!(decide(&[], &w).verdict, Verdict::Accept);

        let flag = DiffEntry {
            addr: Address::from_label("kyc"),
            key: Word::ZERO,
            v_proj: Word::from_u128(1),
            v_act: Word::ZERO,
        };
        assert_eq!(decide(&[flag], &w).verdict, Verdict::Reject);

        // 0.1% drift = 10 bps -> 10 points: at theta_delay, below theta_reject.
        let drift = DiffEntry {
            addr: oracle().0,
            key: oracle().1,
            v_proj: Word::from_u128(1_000_000),
            v_act: Word::from_u128(1_001_000),
        };
        let d = decide(&[drift], &w);
        assert_eq!(d.verdict, Verdict::Delay);
        assert!((d.severity_score - 10.0).abs() < 1e-9);

        let info = DiffEntry {
            addr: Address::from_label("misc"),
            ..flag
        };
        assert_eq!(decide(&[info], &w).verdict, Verdict::Accept);
    }
}
