use std::collections::BTreeMap;

use crate::chain::{Address, L2State, Value};

use super::ast::{PredicateExpr, Schema, Ty};
use super::parse::SENDER_PARAM;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("integer overflow")]
    Overflow,
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("undeclared map `{0}`")]
    UnknownMap(String),
}

/// Parameter bindings for one evaluation: the decoded message params plus the
/// implicit sender.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a> {
    pub params: &'a BTreeMap<String, Value>,
    pub sender: Option<Address>,
}

impl<'a> Bindings<'a> {
    pub fn new(params: &'a BTreeMap<String, Value>, sender: Option<Address>) -> Self {
        Bindings { params, sender }
    }

    fn get(&self, name: &str) -> Option<Value> {
        match self.params.get(name) {
            Some(v) => Some(*v),
            None if name == SENDER_PARAM => self.sender.map(Value::Addr),
            None => None,
        }
    }
}

/// Evaluates expressions against a fixed state and counts visited nodes.
pub struct Evaluator<'a> {
    pub bindings: Bindings<'a>,
    pub state: &'a L2State,
    pub schema: &'a Schema,
    pub visits: u64,
}

impl<'a> Evaluator<'a> {
    pub fn new(bindings: Bindings<'a>, state: &'a L2State, schema: &'a Schema) -> Self {
        Evaluator {
            bindings,
            state,
            schema,
            visits: 0,
        }
    }

    pub fn truth(&mut self, e: &PredicateExpr) -> Result<bool, EvalError> {
        use PredicateExpr::*;
        self.visits += 1;
        match e {
            Cmp { op, lhs, rhs } => {
                let l = self.value(lhs)?;
                let r = self.value(rhs)?;
                match (l, r) {
                    (Value::Int(a), Value::Int(b)) => Ok(op.holds(a, b)),
                    (Value::Addr(a), Value::Addr(b)) => match op {
                        super::ast::CmpOp::Eq => Ok(a == b),
                        super::ast::CmpOp::Ne => Ok(a != b),
                        _ => Err(EvalError::TypeMismatch("ordering on addresses".into())),
                    },
                    _ => Err(EvalError::TypeMismatch("int compared with address".into())),
                }
            }
            And(l, r) => Ok(self.truth(l)? && self.truth(r)?),
            Or(l, r) => Ok(self.truth(l)? || self.truth(r)?),
            Not(inner) => Ok(!self.truth(inner)?),
            _ => Err(EvalError::TypeMismatch("value used as predicate".into())),
        }
    }

    pub fn value(&mut self, e: &PredicateExpr) -> Result<Value, EvalError> {
        use PredicateExpr::*;
        self.visits += 1;
        match e {
            Const(c) => Ok(Value::Int(*c)),
            Param(name) => self.bindings.get(name).ok_or_else(|| EvalError::MissingParam(name.clone())),
            StateLookup { map, key } => {
                let decl = *self.schema.get(map).ok_or_else(|| EvalError::UnknownMap(map.clone()))?;
                let k = self.value(key)?;
                let v = self.state.lookup(map, &k).unwrap_or(match decl.value {
                    Ty::Int => Value::Int(0),
                    Ty::Address => Value::Addr(Address::default()),
                });
                let ok = matches!(
                    (decl.value, v),
                    (Ty::Int, Value::Int(_)) | (Ty::Address, Value::Addr(_))
                );
                if ok {
                    Ok(v)
                } else {
                    Err(EvalError::TypeMismatch(format!("map `{map}` holds a value of the wrong type")))
                }
            }
            LinTerm { coeff, expr } => {
                let v = self.int(expr)?;
                coeff.checked_mul(v).map(Value::Int).ok_or(EvalError::Overflow)
            }
            Sum(terms) => {
                let mut acc = 0i64;
                for t in terms {
                    acc = acc.checked_add(self.int(t)?).ok_or(EvalError::Overflow)?;
                }
                Ok(Value::Int(acc))
            }
            _ => Err(EvalError::TypeMismatch("predicate used as value".into())),
        }
    }

    fn int(&mut self, e: &PredicateExpr) -> Result<i64, EvalError> {
        self.value(e)?
            .as_int()
            .ok_or_else(|| EvalError::TypeMismatch("address in arithmetic".into()))
    }
}

/// Evaluates a predicate with no implicit sender. Errors are returned, not
/// swallowed; callers that validate transactions treat any error as rejection.
pub fn eval_predicate(
    expr: &PredicateExpr,
    params: &BTreeMap<String, Value>,
    state: &L2State,
    schema: &Schema,
) -> Result<bool, EvalError> {
    Evaluator::new(Bindings::new(params, None), state, schema).truth(expr)
}
