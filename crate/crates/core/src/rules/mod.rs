//! Compliance rule language: parser, printer, evaluator and the semantic
//! validator.

mod ast;
mod error;
mod eval;
mod lint;
mod parse;
mod print;
mod validator;

pub use ast::{applicable_rules, solidity_ty, CmpOp, FunctionSig, MapDecl, PredicateExpr, Rule, RuleSet, Schema, Ty};
pub use error::{RuleError, RuleErrorKind};
pub use eval::{eval_predicate, Bindings, EvalError, Evaluator};
pub use lint::{lint, Diagnostic, LintReport, Severity};
pub use parse::{parse_rules, SENDER_PARAM};
pub use print::{print_expr, print_rule, print_rules};
pub use validator::{is_overflow, validate_semantic, RejectReason, SemDecision, SemOutcome};

/// Node count of `expr`.
pub fn rule_complexity(expr: &PredicateExpr) -> usize {
    expr.complexity()
}
