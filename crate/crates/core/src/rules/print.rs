use std::fmt::Write;

use super::ast::{PredicateExpr, Rule, RuleSet, Schema};

/// Renders an expression so that parsing it back yields the same tree.
pub fn print_expr(e: &PredicateExpr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn paren(out: &mut String, e: &PredicateExpr, wrap: bool) {
    if wrap {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &PredicateExpr) {
    use PredicateExpr::*;
    match e {
        Const(c) => write!(out, "{c}").unwrap(),
        Param(p) => out.push_str(p),
        StateLookup { map, key } => {
            out.push_str(map);
            out.push('[');
            write_expr(out, key);
            out.push(']');
        }
        LinTerm { coeff, expr } => {
            write!(out, "{coeff} * ").unwrap();
            paren(out, expr, matches!(**expr, Sum(_) | LinTerm { .. }));
        }
        Sum(terms) => {
            for (i, t) in terms.iter().enumerate() {
                if i > 0 {
                    out.push_str(" + ");
                }
                paren(out, t, matches!(t, Sum(_)));
            }
        }
        Cmp { op, lhs, rhs } => {
            write_expr(out, lhs);
            write!(out, " {} ", op.symbol()).unwrap();
            write_expr(out, rhs);
        }
        And(l, r) => {
            paren(out, l, matches!(**l, Or(..)));
            out.push_str(" && ");
            paren(out, r, matches!(**r, Or(..) | And(..)));
        }
        Or(l, r) => {
            write_expr(out, l);
            out.push_str(" || ");
            paren(out, r, matches!(**r, Or(..)));
        }
        Not(inner) => {
            out.push('!');
            paren(out, inner, !matches!(**inner, Not(_)));
        }
    }
}

pub fn print_rule(r: &Rule) -> String {
    let mut out = String::new();
    if !r.description.is_empty() {
        for line in r.description.lines() {
            writeln!(out, "# {line}").unwrap();
        }
    }
    write!(out, "rule {} on {}: {}", r.id, r.signature, print_expr(&r.expr)).unwrap();
    out
}

/// Canonical text of a rule set: constants, map declarations, then rules in
/// declaration order.
pub fn print_rules(rs: &RuleSet) -> String {
    let mut out = String::new();
    for (name, v) in rs.consts() {
        writeln!(out, "const {name} = {v}").unwrap();
    }
    for (name, decl) in &rs.schema().maps {
        if !Schema::is_builtin(name) {
            writeln!(out, "map {name}: {} -> {}", decl.key, decl.value).unwrap();
        }
    }
    for r in rs.rules() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&print_rule(r));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rules::ast::{CmpOp, FunctionSig};
    use crate::rules::parse_rules;

    #[test]
    fn prints_canonical_operators() {
        let rs = parse_rules("map W: address -> int\nrule r on f(address to): W[to] = 1 && !(to == from)").unwrap();
        assert_eq!(print_expr(&rs.rules()[0].expr), "W[to] == 1 && !(to == from)");
    }

    fn int_expr() -> impl Strategy<Value = PredicateExpr> {
        let leaf = prop_oneof![
            any::<i64>().prop_map(PredicateExpr::Const),
            prop_oneof![Just("a"), Just("b")].prop_map(PredicateExpr::param),
            Just(PredicateExpr::lookup("M", PredicateExpr::param("to"))),
        ];
        leaf.prop_recursive(4, 24, 4, |inner| {
            prop_oneof![
                (any::<i64>(), inner.clone())
                    .prop_filter("scaling a constant folds", |(_, e)| !e.is_const())
                    .prop_map(|(coeff, e)| PredicateExpr::LinTerm { coeff, expr: Box::new(e) }),
                prop::collection::vec(inner, 2..4).prop_map(PredicateExpr::Sum),
            ]
        })
    }

    fn bool_expr() -> impl Strategy<Value = PredicateExpr> {
        let ops = prop_oneof![
            Just(CmpOp::Lt),
            Just(CmpOp::Le),
            Just(CmpOp::Eq),
            Just(CmpOp::Ge),
            Just(CmpOp::Gt),
            Just(CmpOp::Ne)
        ];
        let leaf = (ops, int_expr(), int_expr()).prop_map(|(op, l, r)| PredicateExpr::cmp(op, l, r));
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(l, r)| PredicateExpr::And(Box::new(l), Box::new(r))),
                (inner.clone(), inner.clone()).prop_map(|(l, r)| PredicateExpr::Or(Box::new(l), Box::new(r))),
                inner.prop_map(|e| PredicateExpr::Not(Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(expr in bool_expr(), desc in "[a-z ]{0,12}") {
            let rule = Rule {
                id: "r".into(),
                signature: FunctionSig {
                    name: "f".into(),
                    params: vec![("uint256".into(), "a".into()), ("int64".into(), "b".into()), ("address".into(), "to".into())],
                },
                target_selector: crate::chain::Selector::from_signature("f(uint256,int64,address)"),
                description: desc.trim().to_owned(),
                expr,
                line: 0,
                col: 0,
            };
            let text = format!("map M: address -> int\n\n{}\n", print_rule(&rule));
            let rs = parse_rules(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            prop_assert_eq!(&rs.rules()[0], &rule);
            prop_assert_eq!(print_rules(&rs), text);
        }
    }
}
