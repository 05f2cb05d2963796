use std::fmt;

use super::ast::{PredicateExpr, RuleSet};
use super::parse::parse_rules;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        })
    }
}

/// Printed as `severity:line:col:message`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.severity, self.line, self.col, self.message)
    }
}

pub struct LintReport {
    pub diagnostics: Vec<Diagnostic>,
    /// Present when the file parsed.
    pub rules: Option<RuleSet>,
}

impl LintReport {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }
}

fn is_constant(e: &PredicateExpr) -> bool {
    let mut constant = true;
    e.walk(&mut |n| {
        if matches!(n, PredicateExpr::Param(_) | PredicateExpr::StateLookup { .. }) {
            constant = false;
        }
    });
    constant
}

/// Parses and schema-checks a rule file, reporting per-rule complexity and
/// per-selector rule counts.
pub fn lint(text: &str) -> LintReport {
    let rs = match parse_rules(text) {
        Ok(rs) => rs,
        Err(e) => {
            return LintReport {
                diagnostics: vec![Diagnostic {
                    severity: Severity::Error,
                    line: e.line,
                    col: e.col,
                    message: format!("{}: {}", e.kind, e.message),
                }],
                rules: None,
            }
        }
    };
    let mut diagnostics = Vec::new();
    for r in rs.rules() {
        let at = |severity, message| Diagnostic {
            severity,
            line: r.line,
            col: r.col,
            message,
        };
        if is_constant(&r.expr) {
            diagnostics.push(at(Severity::Warning, format!("rule `{}` does not depend on the transaction", r.id)));
        }
        diagnostics.push(at(
            Severity::Info,
            format!("rule `{}` on {} complexity={}", r.id, r.signature.canonical(), r.complexity()),
        ));
    }
    for (sel, count) in rs.selector_counts() {
        let first = rs.applicable_rules(sel).next().expect("indexed selectors have rules");
        diagnostics.push(Diagnostic {
            severity: Severity::Info,
            line: first.line,
            col: first.col,
            message: format!("selector {sel} ({}) rules={count}", first.signature.canonical()),
        });
    }
    LintReport {
        diagnostics,
        rules: Some(rs),
    }
}
