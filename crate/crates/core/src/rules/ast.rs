use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain::{Selector, BALANCE_MAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Ne => "!=",
        }
    }

    pub fn holds<T: Ord>(self, lhs: T, rhs: T) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }
}

/// A compliance predicate in the decidable fragment: linear integer
/// arithmetic, finite map lookups and Boolean connectives.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredicateExpr {
    Const(i64),
    Param(String),
    StateLookup { map: String, key: Box<PredicateExpr> },
    LinTerm { coeff: i64, expr: Box<PredicateExpr> },
    Sum(Vec<PredicateExpr>),
    Cmp { op: CmpOp, lhs: Box<PredicateExpr>, rhs: Box<PredicateExpr> },
    And(Box<PredicateExpr>, Box<PredicateExpr>),
    Or(Box<PredicateExpr>, Box<PredicateExpr>),
    Not(Box<PredicateExpr>),
}

impl PredicateExpr {
    /// Node count, the rule complexity `L`. Always at least 1.
    pub fn complexity(&self) -> usize {
        use PredicateExpr::*;
        1 + match self {
            Const(_) | Param(_) => 0,
            StateLookup { key, .. } => key.complexity(),
            LinTerm { expr, .. } => expr.complexity(),
            Sum(terms) => terms.iter().map(PredicateExpr::complexity).sum(),
            Cmp { lhs, rhs, .. } | And(lhs, rhs) | Or(lhs, rhs) => lhs.complexity() + rhs.complexity(),
            Not(e) => e.complexity(),
        }
    }

    pub fn depth(&self) -> usize {
        use PredicateExpr::*;
        1 + match self {
            Const(_) | Param(_) => 0,
            StateLookup { key: e, .. } | LinTerm { expr: e, .. } | Not(e) => e.depth(),
            Sum(terms) => terms.iter().map(PredicateExpr::depth).max().unwrap_or(0),
            Cmp { lhs, rhs, .. } | And(lhs, rhs) | Or(lhs, rhs) => lhs.depth().max(rhs.depth()),
        }
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a PredicateExpr)) {
        use PredicateExpr::*;
        f(self);
        match self {
            Const(_) | Param(_) => {}
            StateLookup { key: e, .. } | LinTerm { expr: e, .. } | Not(e) => e.walk(f),
            Sum(terms) => terms.iter().for_each(|t| t.walk(f)),
            Cmp { lhs, rhs, .. } | And(lhs, rhs) | Or(lhs, rhs) => {
                lhs.walk(f);
                rhs.walk(f);
            }
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, PredicateExpr::Const(_))
    }

    pub fn cmp(op: CmpOp, lhs: PredicateExpr, rhs: PredicateExpr) -> Self {
        PredicateExpr::Cmp {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn lookup(map: &str, key: PredicateExpr) -> Self {
        PredicateExpr::StateLookup {
            map: map.to_owned(),
            key: Box::new(key),
        }
    }

    pub fn param(name: &str) -> Self {
        PredicateExpr::Param(name.to_owned())
    }
}

/// Value type in the rule language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ty {
    Int,
    Address,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::Int => "int",
            Ty::Address => "address",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapDecl {
    pub key: Ty,
    pub value: Ty,
}

/// Declared L2 storage maps. `balance` (address -> int) is always present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub maps: BTreeMap<String, MapDecl>,
}

impl Default for Schema {
    fn default() -> Self {
        let mut maps = BTreeMap::new();
        maps.insert(
            BALANCE_MAP.to_owned(),
            MapDecl {
                key: Ty::Address,
                value: Ty::Int,
            },
        );
        Schema { maps }
    }
}

impl Schema {
    pub fn is_builtin(name: &str) -> bool {
        name == BALANCE_MAP
    }

    pub fn get(&self, name: &str) -> Option<&MapDecl> {
        self.maps.get(name)
    }
}

/// A target function as written in a rule header, e.g.
/// `transfer(address to, uint256 amount)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSig {
    pub name: String,
    /// `(solidity type, parameter name)` in declaration order.
    pub params: Vec<(String, String)>,
}

impl FunctionSig {
    /// `name(type1,type2)`, the string hashed into the selector.
    pub fn canonical(&self) -> String {
        let types: Vec<&str> = self.params.iter().map(|(t, _)| t.as_str()).collect();
        format!("{}({})", self.name, types.join(","))
    }

    pub fn selector(&self) -> Selector {
        Selector::from_signature(&self.canonical())
    }

    pub fn param_ty(&self, name: &str) -> Option<Ty> {
        self.params
            .iter()
            .find(|(_, n)| n == name)
            .map(|(t, _)| solidity_ty(t).expect("signature types are checked at parse time"))
    }
}

impl fmt::Display for FunctionSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.params.iter().map(|(t, n)| format!("{t} {n}")).collect();
        write!(f, "{}({})", self.name, params.join(", "))
    }
}

/// Maps a Solidity parameter type onto the rule language's value types.
pub fn solidity_ty(t: &str) -> Option<Ty> {
    match t {
        "address" => Some(Ty::Address),
        "bool" => Some(Ty::Int),
        _ => {
            let bits = t.strip_prefix("uint").or_else(|| t.strip_prefix("int"))?;
            if bits.is_empty() {
                return Some(Ty::Int);
            }
            let n: u32 = bits.parse().ok()?;
            (n % 8 == 0 && (8..=256).contains(&n)).then_some(Ty::Int)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub target_selector: Selector,
    pub signature: FunctionSig,
    pub description: String,
    pub expr: PredicateExpr,
    /// Source position of the `rule` keyword (1-based); 0 for rules built in code.
    pub line: u32,
    pub col: u32,
}

/// Structural equality: source positions are ignored.
impl PartialEq for Rule {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.target_selector == other.target_selector
            && self.signature == other.signature
            && self.description == other.description
            && self.expr == other.expr
    }
}

impl Eq for Rule {}

impl Rule {
    pub fn complexity(&self) -> usize {
        self.expr.complexity()
    }
}

/// Parsed rule file. Immutable once built; rules iterate in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub(crate) rules: Vec<Rule>,
    pub(crate) index: BTreeMap<Selector, Vec<usize>>,
    pub(crate) schema: Schema,
    pub(crate) consts: BTreeMap<String, i64>,
}

impl RuleSet {
    pub(crate) fn new(rules: Vec<Rule>, schema: Schema, consts: BTreeMap<String, i64>) -> Self {
        let mut index: BTreeMap<Selector, Vec<usize>> = BTreeMap::new();
        for (i, r) in rules.iter().enumerate() {
            index.entry(r.target_selector).or_default().push(i);
        }
        RuleSet {
            rules,
            index,
            schema,
            consts,
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn consts(&self) -> &BTreeMap<String, i64> {
        &self.consts
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Rules targeting `selector`, in declaration order.
    pub fn applicable_rules(&self, selector: Selector) -> impl Iterator<Item = &Rule> + '_ {
        self.index
            .get(&selector)
            .into_iter()
            .flatten()
            .map(move |&i| &self.rules[i])
    }

    /// Selector -> rule count, the `|R_f|` figures.
    pub fn selector_counts(&self) -> impl Iterator<Item = (Selector, usize)> + '_ {
        self.index.iter().map(|(s, v)| (*s, v.len()))
    }
}

/// Free-function form of [`RuleSet::applicable_rules`].
pub fn applicable_rules(rs: &RuleSet, selector: Selector) -> Vec<&Rule> {
    rs.applicable_rules(selector).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use PredicateExpr::*;

    #[test]
    fn complexity_counts_nodes() {
        let trivial = PredicateExpr::cmp(CmpOp::Eq, Const(0), Const(0));
        assert_eq!(trivial.complexity(), 3);
        let whitelist = PredicateExpr::cmp(
            CmpOp::Eq,
            PredicateExpr::lookup("Whitelist", PredicateExpr::param("to")),
            Const(1),
        );
        assert_eq!(whitelist.complexity(), 4);
        for k in 1..10 {
            let sum = Sum((0..k).map(|i| Param(format!("p{i}"))).collect());
            assert_eq!(PredicateExpr::cmp(CmpOp::Le, sum, Const(7)).complexity(), k + 3);
        }
    }

    #[test]
    fn solidity_types() {
        assert_eq!(solidity_ty("uint256"), Some(Ty::Int));
        assert_eq!(solidity_ty("int"), Some(Ty::Int));
        assert_eq!(solidity_ty("address"), Some(Ty::Address));
        assert_eq!(solidity_ty("uint7"), None);
        assert_eq!(solidity_ty("bytes32"), None);
    }
}
