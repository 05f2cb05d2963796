//! Rule-file parser.
//!
//! ```text
//! file   := stmt*
//! stmt   := "map" IDENT ":" ty "->" ty
//!         | "const" IDENT "=" ["-"] INT
//!         | "rule" IDENT "on" IDENT "(" [param ("," param)*] ")" ":" expr
//! param  := soltype IDENT
//! expr   := and ("||" and)*
//! and    := not ("&&" not)*
//! not    := "!" not | cmp
//! cmp    := arith [("<"|"<="|"="|"=="|"!="|">="|">") arith]
//! arith  := term (("+"|"-") term)*
//! term   := unary ("*" unary)*
//! unary  := "-" unary | atom
//! atom   := INT | IDENT | IDENT "[" expr "]" | "(" expr ")"
//! ```
//!
//! Full-line `#` comments directly above a `rule` become its description.
//! Maps and constants must be declared before use. A rule may refer to the
//! transaction sender as `from` unless its signature declares a parameter of
//! that name.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{solidity_ty, CmpOp, FunctionSig, MapDecl, PredicateExpr, Rule, RuleSet, Schema, Ty};
use super::error::{RuleError, RuleErrorKind};

const MAX_NESTING: usize = 128;

/// Implicitly bound sender parameter.
pub const SENDER_PARAM: &str = "from";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u128),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: (u32, u32),
}

const SYMBOLS: &[&str] = &[
    "->", "<=", ">=", "==", "!=", "&&", "||", "(", ")", "[", "]", ",", ":", ";", "+", "-", "*", "=", "<", ">", "!",
];

struct Lexed {
    tokens: Vec<Token>,
    /// Full-line comments, keyed by line.
    comments: BTreeMap<u32, String>,
}

fn lex(src: &str) -> Result<Lexed, RuleError> {
    let mut tokens = Vec::new();
    let mut comments = BTreeMap::new();
    for (idx, line) in src.lines().enumerate() {
        let lno = idx as u32 + 1;
        let bytes = line.as_bytes();
        let mut i = 0;
        let mut seen_code = false;
        while i < bytes.len() {
            let c = bytes[i];
            let pos = (lno, i as u32 + 1);
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c == b'#' {
                if !seen_code {
                    comments.insert(lno, line[i + 1..].trim().to_owned());
                }
                break;
            } else if c.is_ascii_alphabetic() || c == b'_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token {
                    tok: Tok::Ident(line[start..i].to_owned()),
                    pos,
                });
                seen_code = true;
            } else if c.is_ascii_digit() {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                    i += 1;
                }
                let digits: String = line[start..i].chars().filter(|&d| d != '_').collect();
                let v = digits
                    .parse::<u128>()
                    .map_err(|_| RuleError::new(RuleErrorKind::Parse, pos, "integer literal out of range"))?;
                tokens.push(Token { tok: Tok::Int(v), pos });
                seen_code = true;
            } else {
                let rest = &line[i..];
                let sym = SYMBOLS.iter().find(|s| rest.starts_with(**s)).ok_or_else(|| {
                    let ch = rest.chars().next().unwrap_or('?');
                    RuleError::new(RuleErrorKind::Parse, pos, format!("unexpected character `{ch}`"))
                })?;
                tokens.push(Token { tok: Tok::Sym(sym), pos });
                i += sym.len();
                seen_code = true;
            }
        }
    }
    let eof_line = src.lines().count() as u32 + 1;
    tokens.push(Token {
        tok: Tok::Eof,
        pos: (eof_line, 1),
    });
    Ok(Lexed { tokens, comments })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Val(Ty),
    Bool,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Val(Ty::Int) => "int",
            Kind::Val(Ty::Address) => "address",
            Kind::Bool => "bool",
        }
    }
}

type Typed = (PredicateExpr, Kind);

struct Parser<'a> {
    toks: Vec<Token>,
    at: usize,
    comments: &'a BTreeMap<u32, String>,
    schema: Schema,
    consts: BTreeMap<String, i64>,
    sig: Option<FunctionSig>,
    nesting: usize,
}

fn is_keyword(t: &Tok) -> bool {
    matches!(t, Tok::Ident(s) if s == "rule" || s == "map" || s == "const")
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err(&self, kind: RuleErrorKind, pos: (u32, u32), msg: impl Into<String>) -> RuleError {
        RuleError::new(kind, pos, msg)
    }

    fn unexpected(&self, wanted: &str) -> RuleError {
        let t = self.peek();
        let found = match &t.tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_owned(),
        };
        self.err(RuleErrorKind::Parse, t.pos, format!("expected {wanted}, found {found}"))
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek().tok, Tok::Sym(x) if x == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(u32, u32), RuleError> {
        let pos = self.peek().pos;
        if self.eat_sym(s) {
            Ok(pos)
        } else {
            Err(self.unexpected(&format!("`{s}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, (u32, u32)), RuleError> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_keyword(&self.peek().tok) => {
                let s = s.clone();
                let pos = self.bump().pos;
                Ok((s, pos))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(u32, u32), RuleError> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => Ok(self.bump().pos),
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    fn value_ty(&mut self) -> Result<Ty, RuleError> {
        let (name, pos) = self.ident("a type")?;
        solidity_ty(&name)
            .ok_or_else(|| self.err(RuleErrorKind::Parse, pos, format!("unsupported type `{name}`")))
    }

    fn end_of_stmt(&mut self) -> Result<(), RuleError> {
        self.eat_sym(";");
        let t = &self.peek().tok;
        if *t == Tok::Eof || is_keyword(t) {
            Ok(())
        } else {
            Err(self.unexpected("end of statement"))
        }
    }

    fn file(&mut self) -> Result<Vec<Rule>, RuleError> {
        let mut rules: Vec<Rule> = Vec::new();
        let mut ids = BTreeSet::new();
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "map" => {
                    self.bump();
                    let (name, pos) = self.ident("a map name")?;
                    self.expect_sym(":")?;
                    let key = self.value_ty()?;
                    self.expect_sym("->")?;
                    let value = self.value_ty()?;
                    if self.schema.maps.contains_key(&name) {
                        return Err(self.err(RuleErrorKind::Duplicate, pos, format!("map `{name}` declared twice")));
                    }
                    self.schema.maps.insert(name, MapDecl { key, value });
                    self.end_of_stmt()?;
                }
                Tok::Ident(kw) if kw == "const" => {
                    self.bump();
                    let (name, pos) = self.ident("a constant name")?;
                    self.expect_sym("=")?;
                    let neg = self.eat_sym("-");
                    let lit_pos = self.peek().pos;
                    let Tok::Int(mag) = self.peek().tok else {
                        return Err(self.unexpected("an integer literal"));
                    };
                    self.bump();
                    let v = signed_literal(mag, neg)
                        .ok_or_else(|| self.err(RuleErrorKind::Parse, lit_pos, "integer literal out of range"))?;
                    if self.consts.contains_key(&name) {
                        return Err(self.err(RuleErrorKind::Duplicate, pos, format!("constant `{name}` declared twice")));
                    }
                    self.consts.insert(name, v);
                    self.end_of_stmt()?;
                }
                Tok::Ident(kw) if kw == "rule" => {
                    let rule = self.rule()?;
                    if !ids.insert(rule.id.clone()) {
                        return Err(self.err(
                            RuleErrorKind::Duplicate,
                            (rule.line, rule.col),
                            format!("rule `{}` declared twice", rule.id),
                        ));
                    }
                    rules.push(rule);
                    self.end_of_stmt()?;
                }
                _ => return Err(self.unexpected("`rule`, `map` or `const`")),
            }
        }
        Ok(rules)
    }

    fn rule(&mut self) -> Result<Rule, RuleError> {
        let pos = self.keyword("rule")?;
        let (id, _) = self.ident("a rule id")?;
        self.keyword("on")?;
        let (fname, _) = self.ident("a function name")?;
        self.expect_sym("(")?;
        let mut params: Vec<(String, String)> = Vec::new();
        if !self.eat_sym(")") {
            loop {
                let (ty, tpos) = self.ident("a parameter type")?;
                if solidity_ty(&ty).is_none() {
                    return Err(self.err(RuleErrorKind::Parse, tpos, format!("unsupported type `{ty}`")));
                }
                let (name, npos) = self.ident("a parameter name")?;
                if params.iter().any(|(_, n)| *n == name) {
                    return Err(self.err(RuleErrorKind::Duplicate, npos, format!("parameter `{name}` declared twice")));
                }
                params.push((ty, name));
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        self.expect_sym(":")?;
        let sig = FunctionSig { name: fname, params };
        self.sig = Some(sig.clone());
        let body_pos = self.peek().pos;
        let (expr, kind) = self.or()?;
        self.sig = None;
        if kind != Kind::Bool {
            return Err(self.err(
                RuleErrorKind::Type,
                body_pos,
                format!("rule body must be a predicate, found {}", kind.name()),
            ));
        }
        Ok(Rule {
            id,
            target_selector: sig.selector(),
            signature: sig,
            description: self.description_above(pos.0),
            expr,
            line: pos.0,
            col: pos.1,
        })
    }

    fn description_above(&self, line: u32) -> String {
        let mut lines = Vec::new();
        let mut l = line;
        while l > 1 {
            l -= 1;
            match self.comments.get(&l) {
                Some(c) => lines.push(c.as_str()),
                None => break,
            }
        }
        lines.reverse();
        lines.join("\n")
    }

    fn enter(&mut self) -> Result<(), RuleError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(self.err(RuleErrorKind::Parse, self.peek().pos, "expression nested too deeply"));
        }
        Ok(())
    }

    fn need(&self, (e, k): Typed, want: Kind, pos: (u32, u32), ctx: &str) -> Result<PredicateExpr, RuleError> {
        if k == want {
            Ok(e)
        } else {
            Err(self.err(
                RuleErrorKind::Type,
                pos,
                format!("{ctx} expects {}, found {}", want.name(), k.name()),
            ))
        }
    }

    fn or(&mut self) -> Result<Typed, RuleError> {
        let pos = self.peek().pos;
        let mut lhs = self.and()?;
        while self.peek().tok == Tok::Sym("||") {
            self.bump();
            let rpos = self.peek().pos;
            let rhs = self.and()?;
            let l = self.need(lhs, Kind::Bool, pos, "`||`")?;
            let r = self.need(rhs, Kind::Bool, rpos, "`||`")?;
            lhs = (PredicateExpr::Or(Box::new(l), Box::new(r)), Kind::Bool);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Typed, RuleError> {
        let pos = self.peek().pos;
        let mut lhs = self.not()?;
        while self.peek().tok == Tok::Sym("&&") {
            self.bump();
            let rpos = self.peek().pos;
            let rhs = self.not()?;
            let l = self.need(lhs, Kind::Bool, pos, "`&&`")?;
            let r = self.need(rhs, Kind::Bool, rpos, "`&&`")?;
            lhs = (PredicateExpr::And(Box::new(l), Box::new(r)), Kind::Bool);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Typed, RuleError> {
        if self.peek().tok == Tok::Sym("!") {
            self.bump();
            self.enter()?;
            let pos = self.peek().pos;
            let inner = self.not()?;
            self.nesting -= 1;
            let e = self.need(inner, Kind::Bool, pos, "`!`")?;
            return Ok((PredicateExpr::Not(Box::new(e)), Kind::Bool));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Typed, RuleError> {
        let lhs = self.arith()?;
        let op = match self.peek().tok {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym("=") | Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym(">=") => CmpOp::Ge,
            Tok::Sym(">") => CmpOp::Gt,
            _ => return Ok(lhs),
        };
        let op_pos = self.bump().pos;
        let rhs = self.arith()?;
        let ok = match (lhs.1, rhs.1) {
            (Kind::Val(Ty::Int), Kind::Val(Ty::Int)) => true,
            (Kind::Val(Ty::Address), Kind::Val(Ty::Address)) => matches!(op, CmpOp::Eq | CmpOp::Ne),
            _ => false,
        };
        if !ok {
            return Err(self.err(
                RuleErrorKind::Type,
                op_pos,
                format!("cannot compare {} {} {}", lhs.1.name(), op.symbol(), rhs.1.name()),
            ));
        }
        Ok((PredicateExpr::cmp(op, lhs.0, rhs.0), Kind::Bool))
    }

    fn arith(&mut self) -> Result<Typed, RuleError> {
        let first_pos = self.peek().pos;
        let first = self.term()?;
        if !matches!(self.peek().tok, Tok::Sym("+") | Tok::Sym("-")) {
            return Ok(first);
        }
        let mut terms = vec![self.need(first, Kind::Val(Ty::Int), first_pos, "`+`")?];
        loop {
            let neg = match self.peek().tok {
                Tok::Sym("+") => false,
                Tok::Sym("-") => true,
                _ => break,
            };
            let op_pos = self.bump().pos;
            let pos = self.peek().pos;
            let t = self.term()?;
            let t = self.need(t, Kind::Val(Ty::Int), pos, if neg { "`-`" } else { "`+`" })?;
            terms.push(if neg { self.negate(t, op_pos)? } else { t });
        }
        Ok((PredicateExpr::Sum(terms), Kind::Val(Ty::Int)))
    }

    fn negate(&self, e: PredicateExpr, pos: (u32, u32)) -> Result<PredicateExpr, RuleError> {
        let overflow = || self.err(RuleErrorKind::Parse, pos, "constant overflows i64");
        Ok(match e {
            PredicateExpr::Const(c) => PredicateExpr::Const(c.checked_neg().ok_or_else(overflow)?),
            PredicateExpr::LinTerm { coeff, expr } => PredicateExpr::LinTerm {
                coeff: coeff.checked_neg().ok_or_else(overflow)?,
                expr,
            },
            other => PredicateExpr::LinTerm {
                coeff: -1,
                expr: Box::new(other),
            },
        })
    }

    fn term(&mut self) -> Result<Typed, RuleError> {
        let first_pos = self.peek().pos;
        let mut acc = self.unary()?;
        while self.peek().tok == Tok::Sym("*") {
            let op_pos = self.bump().pos;
            let rpos = self.peek().pos;
            let rhs = self.unary()?;
            let l = self.need(acc, Kind::Val(Ty::Int), first_pos, "`*`")?;
            let r = self.need(rhs, Kind::Val(Ty::Int), rpos, "`*`")?;
            let e = match (l, r) {
                (PredicateExpr::Const(a), PredicateExpr::Const(b)) => PredicateExpr::Const(
                    a.checked_mul(b)
                        .ok_or_else(|| self.err(RuleErrorKind::Parse, op_pos, "constant overflows i64"))?,
                ),
                (PredicateExpr::Const(c), e) | (e, PredicateExpr::Const(c)) => PredicateExpr::LinTerm {
                    coeff: c,
                    expr: Box::new(e),
                },
                _ => {
                    return Err(self.err(
                        RuleErrorKind::Linearity,
                        op_pos,
                        "product of two non-constant terms is outside linear arithmetic",
                    ))
                }
            };
            acc = (e, Kind::Val(Ty::Int));
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Typed, RuleError> {
        if self.peek().tok != Tok::Sym("-") {
            return self.atom();
        }
        let pos = self.bump().pos;
        if let Tok::Int(mag) = *self.peek_at(0) {
            self.bump();
            let v = signed_literal(mag, true)
                .ok_or_else(|| self.err(RuleErrorKind::Parse, pos, "integer literal out of range"))?;
            return Ok((PredicateExpr::Const(v), Kind::Val(Ty::Int)));
        }
        self.enter()?;
        let ipos = self.peek().pos;
        let inner = self.unary()?;
        self.nesting -= 1;
        let e = self.need(inner, Kind::Val(Ty::Int), ipos, "unary `-`")?;
        Ok((self.negate(e, pos)?, Kind::Val(Ty::Int)))
    }

    fn atom(&mut self) -> Result<Typed, RuleError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Int(mag) => {
                self.bump();
                let v = signed_literal(mag, false)
                    .ok_or_else(|| self.err(RuleErrorKind::Parse, t.pos, "integer literal out of range"))?;
                Ok((PredicateExpr::Const(v), Kind::Val(Ty::Int)))
            }
            Tok::Sym("(") => {
                self.bump();
                self.enter()?;
                let e = self.or()?;
                self.nesting -= 1;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(ref name) if !is_keyword(&t.tok) => {
                self.bump();
                if self.peek().tok == Tok::Sym("[") {
                    return self.lookup(name, t.pos);
                }
                if let Some(&c) = self.consts.get(name) {
                    return Ok((PredicateExpr::Const(c), Kind::Val(Ty::Int)));
                }
                let sig = self.sig.as_ref().expect("expressions only occur inside rules");
                let ty = match sig.param_ty(name) {
                    Some(ty) => ty,
                    None if name == SENDER_PARAM => Ty::Address,
                    None => {
                        return Err(self.err(
                            RuleErrorKind::Schema,
                            t.pos,
                            format!("`{name}` is not a parameter of {}", sig.canonical()),
                        ))
                    }
                };
                Ok((PredicateExpr::Param(name.clone()), Kind::Val(ty)))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn lookup(&mut self, map: &str, pos: (u32, u32)) -> Result<Typed, RuleError> {
        let decl = *self
            .schema
            .get(map)
            .ok_or_else(|| self.err(RuleErrorKind::Schema, pos, format!("map `{map}` is not declared")))?;
        self.expect_sym("[")?;
        self.enter()?;
        let kpos = self.peek().pos;
        let key = self.or()?;
        self.nesting -= 1;
        self.expect_sym("]")?;
        let key = self.need(key, Kind::Val(decl.key), kpos, &format!("map `{map}` key"))?;
        Ok((PredicateExpr::lookup(map, key), Kind::Val(decl.value)))
    }
}

fn signed_literal(mag: u128, neg: bool) -> Option<i64> {
    if mag > 1u128 << 64 {
        return None;
    }
    let v = if neg { -(mag as i128) } else { mag as i128 };
    i64::try_from(v).ok()
}

/// Parses a rule file into an immutable [`RuleSet`].
pub fn parse_rules(text: &str) -> Result<RuleSet, RuleError> {
    let lexed = lex(text)?;
    let mut p = Parser {
        toks: lexed.tokens,
        at: 0,
        comments: &lexed.comments,
        schema: Schema::default(),
        consts: BTreeMap::new(),
        sig: None,
        nesting: 0,
    };
    let rules = p.file()?;
    Ok(RuleSet::new(rules, p.schema, p.consts))
}
