use serde::{Deserialize, Serialize};

use crate::chain::{L2State, Transaction};

use super::ast::RuleSet;
use super::eval::{Bindings, EvalError, Evaluator};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The predicate evaluated to false.
    Violated,
    /// Evaluation failed; the rule is treated as violated.
    EvalError(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum SemDecision {
    Accept,
    Reject { rule_id: String, reason: RejectReason },
}

impl SemDecision {
    pub fn is_accept(&self) -> bool {
        matches!(self, SemDecision::Accept)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemOutcome {
    pub decision: SemDecision,
    /// AST nodes visited across all evaluated rules.
    pub visits: u64,
    pub rules_evaluated: usize,
}

/// Checks `tx` against every rule targeting its selector, stopping at the
/// first rule (in declaration order) that does not hold.
pub fn validate_semantic(tx: &Transaction, state: &L2State, rs: &RuleSet) -> SemOutcome {
    let bindings = Bindings::new(&tx.msg.params, Some(tx.meta.sender));
    let mut ev = Evaluator::new(bindings, state, rs.schema());
    let mut rules_evaluated = 0;
    for rule in rs.applicable_rules(tx.msg.selector) {
        rules_evaluated += 1;
        let reason = match ev.truth(&rule.expr) {
            Ok(true) => continue,
            Ok(false) => RejectReason::Violated,
            Err(e) => RejectReason::EvalError(e.to_string()),
        };
        return SemOutcome {
            decision: SemDecision::Reject {
                rule_id: rule.id.clone(),
                reason,
            },
            visits: ev.visits,
            rules_evaluated,
        };
    }
    SemOutcome {
        decision: SemDecision::Accept,
        visits: ev.visits,
        rules_evaluated,
    }
}

/// Whether an evaluation error is an overflow (reported separately in lint and logs).
pub fn is_overflow(reason: &RejectReason) -> bool {
    matches!(reason, RejectReason::EvalError(m) if *m == EvalError::Overflow.to_string())
}
