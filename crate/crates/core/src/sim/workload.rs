//! Poisson arrivals of transfers, oracle-dependent bridging and swaps, plus
//! labeled invalid transactions from malicious users.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::chain::{Address, Function, KeyRegistry, L2State, Message, Meta, SigningKey, Transaction, Value};

use super::config::ScenarioConfig;
use super::profiles::{outsider, sanctioned, token, user, SANCTIONED, THETA_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxClass {
    Transfer,
    Bridge,
    /// Oracle-priced swap; the MEV target.
    Arbitrage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    NonWhitelisted,
    OverThetaMax,
    Sanctioned,
    BadSignature,
}

impl Injection {
    pub const ALL: [Injection; 4] = [
        Injection::NonWhitelisted,
        Injection::OverThetaMax,
        Injection::Sanctioned,
        Injection::BadSignature,
    ];
}

#[derive(Debug, Clone)]
pub struct Arrival {
    pub tx: Transaction,
    pub class: TxClass,
    pub injected: Option<Injection>,
}

/// A sender is idle again three windows after submitting, by which point its
/// transaction has executed or been rejected; nonces therefore never race.
const COOLDOWN_WINDOWS: u64 = 3;

pub struct Workload {
    keys: Vec<SigningKey>,
    registry: KeyRegistry,
    busy_until: Vec<u64>,
    arrivals: Option<Poisson<f64>>,
    window_us: u64,
    intensity: f64,
    malicious: f64,
    rng: ChaCha8Rng,
    /// Arrivals dropped because every user was busy.
    pub throttled: u64,
}

impl Workload {
    pub fn new(cfg: &ScenarioConfig, rng: ChaCha8Rng) -> Self {
        let keys: Vec<SigningKey> = (0..cfg.users).map(|i| SigningKey::derive(cfg.seed, user(i))).collect();
        let mut registry = KeyRegistry::new();
        for (i, k) in keys.iter().enumerate() {
            registry.insert(user(i), *k);
        }
        let mean = cfg.tps * cfg.window_ms as f64 / 1_000.0;
        Workload {
            keys,
            registry,
            busy_until: vec![0; cfg.users],
            arrivals: (mean > 0.0).then(|| Poisson::new(mean).expect("positive mean")),
            window_us: cfg.window_us(),
            intensity: cfg.dependency_intensity,
            malicious: if cfg.adversary.users() { cfg.malicious.fraction } else { 0.0 },
            rng,
            throttled: 0,
        }
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    fn pick_sender(&mut self, w: u64) -> Option<usize> {
        let n = self.busy_until.len();
        for _ in 0..8 {
            let i = self.rng.gen_range(0..n);
            if self.busy_until[i] <= w {
                return Some(i);
            }
        }
        let start = self.rng.gen_range(0..n);
        (0..n).map(|k| (start + k) % n).find(|&i| self.busy_until[i] <= w)
    }

    fn other_user(&mut self, not: usize) -> Address {
        let n = self.busy_until.len();
        let j = (not + self.rng.gen_range(1..n)) % n;
        user(j)
    }

    /// Arrivals in window `w`, sorted by arrival time. Nonces come from `state`.
    pub fn window(&mut self, w: u64, state: &L2State) -> Vec<Arrival> {
        let count = match &self.arrivals {
            Some(p) => p.sample(&mut self.rng) as usize,
            None => 0,
        };
        let start = w * self.window_us;
        let mut times: Vec<u64> = (0..count)
            .map(|_| start + 1 + self.rng.gen_range(0..self.window_us - 1))
            .collect();
        times.sort_unstable();
        let mut out = Vec::with_capacity(count);
        for ts in times {
            let Some(s) = self.pick_sender(w) else {
                self.throttled += 1;
                continue;
            };
            self.busy_until[s] = w + COOLDOWN_WINDOWS;
            let sender = user(s);
            let injected = (self.rng.gen::<f64>() < self.malicious)
                .then(|| Injection::ALL[self.rng.gen_range(0..Injection::ALL.len())]);
            let (class, msg) = match injected {
                Some(kind) => {
                    let (to, amount) = match kind {
                        Injection::NonWhitelisted => (outsider(self.rng.gen_range(0..1000)), self.rng.gen_range(1..=100)),
                        Injection::OverThetaMax => (self.other_user(s), THETA_MAX + self.rng.gen_range(1..=1000)),
                        Injection::Sanctioned => (sanctioned(self.rng.gen_range(0..SANCTIONED)), self.rng.gen_range(1..=100)),
                        Injection::BadSignature => (self.other_user(s), self.rng.gen_range(1..=100)),
                    };
                    (TxClass::Transfer, transfer(to, amount))
                }
                None if self.rng.gen::<f64>() < self.intensity => {
                    if self.rng.gen_bool(0.5) {
                        let to = self.other_user(s);
                        let msg = Message::new(token(), Function::BridgeMint.selector())
                            .with_param("to", Value::Addr(to))
                            .with_param("amount", Value::Int(self.rng.gen_range(1..=10)));
                        (TxClass::Bridge, msg)
                    } else {
                        let msg = Message::new(token(), Function::Swap.selector())
                            .with_param("amount", Value::Int(self.rng.gen_range(1..=50)))
                            .with_param("minOut", Value::Int(0));
                        (TxClass::Arbitrage, msg)
                    }
                }
                None => {
                    let to = self.other_user(s);
                    (TxClass::Transfer, transfer(to, self.rng.gen_range(1..=100)))
                }
            };
            let meta = Meta {
                arrival_ts: ts,
                nonce: state.next_nonce(&sender),
                gas: 21_000,
                sender,
            };
            let key = if injected == Some(Injection::BadSignature) {
                SigningKey::derive(!0, sender)
            } else {
                self.keys[s]
            };
            out.push(Arrival {
                tx: Transaction::sign(msg, meta, &key),
                class,
                injected,
            });
        }
        out
    }
}

fn transfer(to: Address, amount: i64) -> Message {
    Message::new(token(), Function::Transfer.selector())
        .with_param("to", Value::Addr(to))
        .with_param("amount", Value::Int(amount))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::chain::syn_legit;
    use crate::sim::config::Adversary;

    fn make(cfg: &ScenarioConfig) -> Workload {
        Workload::new(cfg, ChaCha8Rng::seed_from_u64(cfg.seed))
    }

    #[test]
    fn identical_stream_on_rerun() {
        let cfg = ScenarioConfig {
            tps: 100.0,
            seed: 5,
            ..ScenarioConfig::default()
        };
        let s = L2State::default();
        let run = || {
            let mut w = make(&cfg);
            (0..10).flat_map(|i| w.window(i, &s)).map(|a| a.tx.hash()).collect::<Vec<_>>()
        };
        let a = run();
        assert!(a.len() > 1000);
        assert_eq!(a, run());
    }

    #[test]
    fn arrivals_are_sorted_inside_their_window_and_rate_matches() {
        let cfg = ScenarioConfig {
            tps: 50.0,
            ..ScenarioConfig::default()
        };
        let mut w = make(&cfg);
        let s = L2State::default();
        let mut total = 0;
        for i in 0..200 {
            let a = w.window(i, &s);
            assert!(a.windows(2).all(|p| p[0].tx.meta.arrival_ts <= p[1].tx.meta.arrival_ts));
            assert!(a.iter().all(|x| x.tx.meta.arrival_ts / cfg.window_us() == i));
            total += a.len();
        }
        let mean = total as f64 / 200.0;
        assert!((mean - 100.0).abs() < 3.0, "{mean}");
        assert_eq!(w.throttled, 0);
    }

    #[test]
    fn zero_intensity_means_no_oracle_reads() {
        let cfg = ScenarioConfig {
            dependency_intensity: 0.0,
            tps: 50.0,
            ..ScenarioConfig::default()
        };
        let mut w = make(&cfg);
        let s = L2State::default();
        for i in 0..50 {
            assert!(w.window(i, &s).iter().all(|a| a.class == TxClass::Transfer));
        }
    }

    #[test]
    fn senders_cool_down_and_sign_correctly() {
        let cfg = ScenarioConfig {
            tps: 40.0,
            users: 300,
            ..ScenarioConfig::default()
        };
        let mut w = make(&cfg);
        let s = L2State::default();
        let mut last: std::collections::BTreeMap<Address, u64> = Default::default();
        for i in 0..100 {
            for a in w.window(i, &s) {
                if let Some(prev) = last.insert(a.tx.meta.sender, i) {
                    assert!(i >= prev + COOLDOWN_WINDOWS);
                }
                assert!(syn_legit(&a.tx, w.registry(), &s));
            }
        }
    }

    #[test]
    fn injections_are_labeled_and_only_with_the_adversary() {
        let mut cfg = ScenarioConfig {
            tps: 50.0,
            ..ScenarioConfig::default()
        };
        cfg.malicious.fraction = 0.5;
        let s = L2State::default();
        let mut w = make(&cfg);
        assert!((0..20).flat_map(|i| w.window(i, &s)).all(|a| a.injected.is_none()));
        cfg.adversary = Adversary::MaliciousUsers;
        let mut w = make(&cfg);
        let all: Vec<Arrival> = (0..20).flat_map(|i| w.window(i, &s)).collect();
        let injected: Vec<_> = all.iter().filter_map(|a| a.injected.map(|k| (k, a))).collect();
        assert!(injected.len() * 3 > all.len());
        for kind in Injection::ALL {
            assert!(injected.iter().any(|(k, _)| *k == kind));
        }
        for (k, a) in injected {
            assert_eq!(syn_legit(&a.tx, w.registry(), &s), k != Injection::BadSignature);
        }
    }
}
