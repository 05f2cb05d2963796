//! State and transaction fixtures for `validate`.
//!
//! Addresses are written as labels (`alice`, hashed to an address) or as
//! `0x`-prefixed hex.
//!
//! State:
//! ```toml
//! [balances]
//! alice = 1000
//! [nonces]
//! alice = 0
//! [maps.EDD]
//! alice = 1
//! ```
//!
//! Transactions:
//! ```toml
//! [[tx]]
//! name = "compliant"
//! sender = "alice"
//! function = "transfer"      # or "transfer(address,uint256)"
//! params = { to = "bob", amount = 9000 }
//! ```

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use tollgate_core::chain::{Address, L2State, Message, Meta, Selector, Signature, Transaction, Value};
use tollgate_core::rules::{solidity_ty, RuleSet, Ty};

pub fn address(s: &str) -> Result<Address> {
    if s.starts_with("0x") {
        s.parse().map_err(|e| anyhow!("{e}"))
    } else if s.is_empty() {
        bail!("empty address")
    } else {
        Ok(Address::from_label(s))
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Int(i64),
    Str(String),
}

impl Scalar {
    fn to_value(&self, ty: Ty) -> Result<Value> {
        match (self, ty) {
            (Scalar::Int(v), Ty::Int) => Ok(Value::Int(*v)),
            (Scalar::Str(s), Ty::Address) => Ok(Value::Addr(address(s)?)),
            (Scalar::Int(v), Ty::Address) => bail!("expected an address, got {v}"),
            (Scalar::Str(s), Ty::Int) => bail!("expected an integer, got \"{s}\""),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    #[serde(default)]
    balances: BTreeMap<String, i64>,
    #[serde(default)]
    nonces: BTreeMap<String, u64>,
    #[serde(default)]
    maps: BTreeMap<String, BTreeMap<String, Scalar>>,
}

/// Loads an L2 state, checking every map against the rule schema.
pub fn load_state(text: &str, rules: &RuleSet) -> Result<L2State> {
    let f: StateFile = toml::from_str(text).context("state fixture")?;
    let mut s = L2State::default();
    for (who, b) in &f.balances {
        s.balances.insert(address(who)?, *b);
    }
    for (who, n) in &f.nonces {
        s.nonces.insert(address(who)?, *n);
    }
    for (map, entries) in &f.maps {
        let decl = rules
            .schema()
            .get(map)
            .ok_or_else(|| anyhow!("map `{map}` is not declared by the rules"))?;
        for (k, v) in entries {
            let key = Scalar::Str(k.clone());
            let key = match decl.key {
                Ty::Address => key.to_value(Ty::Address),
                Ty::Int => k.parse::<i64>().map(Value::Int).map_err(|_| anyhow!("map `{map}` has int keys, got `{k}`")),
            }
            .with_context(|| format!("map `{map}` key `{k}`"))?;
            let value = v.to_value(decl.value).with_context(|| format!("map `{map}` entry `{k}`"))?;
            s.set(map, key, value);
        }
    }
    Ok(s)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TxEntry {
    name: Option<String>,
    sender: String,
    function: String,
    #[serde(default)]
    nonce: Option<u64>,
    #[serde(default = "default_ts")]
    arrival_ts: u64,
    #[serde(default)]
    params: BTreeMap<String, Scalar>,
}

fn default_ts() -> u64 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TxFile {
    #[serde(default)]
    tx: Vec<TxEntry>,
}

pub struct NamedTx {
    pub name: String,
    pub tx: Transaction,
}

/// Parameter types come from the rule signature targeting the function;
/// every declared parameter must be present with the right type.
pub fn load_txs(text: &str, rules: &RuleSet, state: &L2State) -> Result<Vec<NamedTx>> {
    let f: TxFile = toml::from_str(text).context("transaction fixture")?;
    let mut out = Vec::with_capacity(f.tx.len());
    for (i, e) in f.tx.iter().enumerate() {
        let name = e.name.clone().unwrap_or_else(|| format!("tx{i}"));
        let ctx = || format!("transaction `{name}`");
        let sig = rules
            .rules()
            .iter()
            .map(|r| &r.signature)
            .find(|s| s.name == e.function || s.canonical() == e.function);
        let (selector, types): (Selector, BTreeMap<String, Ty>) = match sig {
            Some(s) => (
                s.selector(),
                s.params
                    .iter()
                    .map(|(t, n)| (n.clone(), solidity_ty(t).expect("parsed signature")))
                    .collect(),
            ),
            None if e.function.contains('(') => (Selector::from_signature(&e.function), BTreeMap::new()),
            None => bail!("{}: function `{}` is not targeted by any rule; give its full signature", ctx(), e.function),
        };
        for p in types.keys() {
            if !e.params.contains_key(p) {
                bail!("{}: missing parameter `{p}`", ctx());
            }
        }
        let sender = address(&e.sender).with_context(ctx)?;
        let mut msg = Message::new(Address::from_label("token"), selector);
        for (k, v) in &e.params {
            let ty = match (types.get(k), v) {
                (Some(t), _) => *t,
                (None, Scalar::Int(_)) => Ty::Int,
                (None, Scalar::Str(_)) => Ty::Address,
            };
            let value = v.to_value(ty).with_context(|| format!("{}: parameter `{k}`", ctx()))?;
            msg = msg.with_param(k, value);
        }
        let tx = Transaction {
            msg,
            sig: Signature::default(),
            meta: Meta {
                arrival_ts: e.arrival_ts,
                nonce: e.nonce.unwrap_or_else(|| state.next_nonce(&sender)),
                gas: 21_000,
                sender,
            },
        };
        out.push(NamedTx { name, tx });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use tollgate_core::rules::parse_rules;

    use super::*;

    const AML: &str = "map EDD: address -> int\nrule threshold on transfer(address to, uint256 amount): amount <= 10000 || EDD[from] = 1\n";

    #[test]
    fn labels_and_hex_addresses() {
        assert_eq!(address("alice").unwrap(), Address::from_label("alice"));
        let hex = format!("0x{}", "11".repeat(20));
        assert_eq!(address(&hex).unwrap(), Address([0x11; 20]));
        assert!(address("0x12").is_err());
    }

    #[test]
    fn state_maps_must_be_declared_and_typed() {
        let rs = parse_rules(AML).unwrap();
        let s = load_state("[balances]\nalice = 5\n[maps.EDD]\nalice = 1\n", &rs).unwrap();
        assert_eq!(s.balance(&address("alice").unwrap()), 5);
        assert_eq!(s.lookup("EDD", &Value::Addr(address("alice").unwrap())), Some(Value::Int(1)));
        assert!(load_state("[maps.Other]\nalice = 1\n", &rs).is_err());
        assert!(load_state("[maps.EDD]\nalice = \"bob\"\n", &rs).is_err());
        assert!(load_state("[surprise]\n", &rs).is_err());
    }

    #[test]
    fn txs_take_types_from_the_rule_signature() {
        let rs = parse_rules(AML).unwrap();
        let s = L2State::default();
        let txs = load_txs(
            "[[tx]]\nname = \"a\"\nsender = \"alice\"\nfunction = \"transfer\"\nparams = { to = \"bob\", amount = 9000 }\n",
            &rs,
            &s,
        )
        .unwrap();
        assert_eq!(txs[0].tx.msg.params["to"], Value::Addr(address("bob").unwrap()));
        assert_eq!(txs[0].tx.msg.selector, Selector::from_signature("transfer(address,uint256)"));
        let missing = "[[tx]]\nsender = \"alice\"\nfunction = \"transfer\"\nparams = { to = \"bob\" }\n";
        assert!(load_txs(missing, &rs, &s).is_err());
        let wrong = "[[tx]]\nsender = \"alice\"\nfunction = \"transfer\"\nparams = { to = 3, amount = 1 }\n";
        assert!(load_txs(wrong, &rs, &s).is_err());
        let unknown = "[[tx]]\nsender = \"alice\"\nfunction = \"mint\"\n";
        assert!(load_txs(unknown, &rs, &s).is_err());
    }
}
