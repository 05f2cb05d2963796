//! Rule profiles and the initial ledger the simulated users start from.

use rand::Rng;

use crate::chain::{Address, L1Bindings, L2State, Value};
use crate::presync::oracle_slot;
use crate::rules::{parse_rules, RuleSet};

use super::config::RuleProfile;

pub const THETA_MAX: i64 = 1_000_000_000;
pub const INITIAL_BALANCE: i64 = 1_000_000;
/// Sanctioned addresses in the simulated ledger (whitelisted, so only the
/// sanctions rule stops them).
pub const SANCTIONED: usize = 4;

const HEADER: &str = "\
const THETA_MAX = 1000000000
map Whitelist: address -> int
map Sanctions: address -> int
map EDD: address -> int
map Volume24h: address -> int
map Frozen: address -> int
map Tier: address -> int
map Risk: address -> int
map Pep: address -> int
map Jurisdiction: address -> int
map Limit: address -> int
map Blocked: address -> int
";

const SIG: &str = "transfer(address to, uint256 amount)";

/// Ordered pool; a profile of size k takes the first k. The first three
/// catch the injected violations.
const POOL: [(&str, &str); 20] = [
    ("whitelist", "Whitelist[to] = 1"),
    ("concentration", "balance[to] + amount <= THETA_MAX"),
    ("sanctions", "Sanctions[to] = 0"),
    ("threshold", "amount <= 10000 || EDD[from] = 1"),
    ("volume", "Volume24h[from] + amount <= 5000000"),
    ("positive", "amount > 0"),
    ("cap", "amount <= 1000000"),
    ("distinct", "to != from"),
    ("frozen_from", "Frozen[from] = 0"),
    ("frozen_to", "Frozen[to] = 0"),
    ("funded", "balance[from] >= amount"),
    ("tier", "amount <= 5000 || Tier[from] >= 2"),
    ("risk", "Risk[from] + Risk[to] <= 150"),
    ("pep", "Pep[to] = 0 || EDD[to] = 1"),
    ("jurisdiction", "Jurisdiction[to] != 7"),
    ("limit", "Limit[from] = 0 || amount <= Limit[from]"),
    ("skew", "balance[to] - balance[from] <= 2000000000"),
    ("weighted", "2 * amount + Risk[from] <= 2000000"),
    ("not_blocked", "!(Blocked[from] = 1)"),
    ("daily", "Volume24h[from] + 3 * amount <= 15000000"),
];

pub const MAX_RULES: usize = POOL.len();

/// Source text for the first `k` rules of the pool.
pub fn rules_text(k: usize) -> String {
    assert!(k <= MAX_RULES, "at most {MAX_RULES} rules");
    let mut s = HEADER.to_string();
    for (id, body) in &POOL[..k] {
        s.push_str(&format!("rule {id} on {SIG}: {body}\n"));
    }
    s
}

pub fn profile_rules(p: RuleProfile) -> RuleSet {
    parse_rules(&rules_text(p.rule_count())).expect("built-in profile parses")
}

pub fn user(i: usize) -> Address {
    Address::from_label(&format!("user{i}"))
}

pub fn sanctioned(i: usize) -> Address {
    Address::from_label(&format!("sanctioned{i}"))
}

/// Not on the whitelist.
pub fn outsider(i: usize) -> Address {
    Address::from_label(&format!("outsider{i}"))
}

pub fn token() -> Address {
    Address::from_label("token")
}

/// Users with equal balances, all whitelisted, some with EDD and nonzero
/// risk scores; every profile rule holds for ordinary traffic.
pub fn initial_state(users: usize, rng: &mut impl Rng) -> L2State {
    let mut s = L2State::default();
    s.bindings = L1Bindings {
        price_feed: Some(oracle_slot()),
        kyc_registry: None,
    };
    for i in 0..users {
        let a = Value::Addr(user(i));
        s.balances.insert(user(i), INITIAL_BALANCE);
        s.set("Whitelist", a, Value::Int(1));
        s.set("Risk", a, Value::Int(rng.gen_range(0..50)));
        s.set("Jurisdiction", a, Value::Int(rng.gen_range(0..7)));
        if rng.gen_bool(0.1) {
            s.set("EDD", a, Value::Int(1));
        }
    }
    for i in 0..SANCTIONED {
        let a = Value::Addr(sanctioned(i));
        s.set("Whitelist", a, Value::Int(1));
        s.set("Sanctions", a, Value::Int(1));
    }
    s
}
