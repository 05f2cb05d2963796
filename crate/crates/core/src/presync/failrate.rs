use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Address, Function, L1Bindings, L1State, L2State, Message, Meta, Signature, Transaction, Value};

use super::cache::{CacheStats, L1Cache, DEFAULT_CAPACITY};
use super::diff::SlotClass;
use super::oracle::{oracle_slot, OracleChain, OracleWalk, SettlementQueue};
use super::validator::{screen_batch, FreshnessParams, PresyncConfig, RandomFaults};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailRateConfig {
    pub seed: u64,
    pub freshness: FreshnessParams,
    /// false = validator bypassed (accept all).
    pub guarded: bool,
    pub dependency_intensity: f64,
    /// The cache's feed lags confirmed L1 by this many blocks.
    pub oracle_delay_blocks: u64,
    pub oracle: OracleWalk,
    pub users: usize,
    pub batch_size: usize,
    pub windows_per_block: u32,
    pub settlement_lag: u64,
    pub presync: PresyncConfig,
}

impl Default for FailRateConfig {
    fn default() -> Self {
        FailRateConfig {
            seed: 0,
            freshness: FreshnessParams::default(),
            guarded: true,
            dependency_intensity: 0.2,
            oracle_delay_blocks: 3,
            oracle: OracleWalk::default(),
            users: 256,
            batch_size: 32,
            windows_per_block: 6,
            settlement_lag: 1,
            presync: PresyncConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailRateEstimate {
    pub submitted: u64,
    pub accepted: u64,
    pub state_rejected: u64,
    pub reverted: u64,
    pub settled: u64,
    pub settle_failed: u64,
    pub delays: u64,
    /// settle_failed / (settled + settle_failed).
    pub p_fail_accepted: f64,
    /// epsilon + eta.
    pub bound: f64,
    /// 3 * sqrt(bound / N).
    pub margin: f64,
    pub cache: CacheStats,
}

impl FailRateEstimate {
    pub fn executed(&self) -> u64 {
        self.settled + self.settle_failed
    }

    pub fn within_bound(&self) -> bool {
        self.p_fail_accepted <= self.bound + self.margin
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Monte Carlo estimate of P(settlement failure | accepted). Runs until
/// `trials` accepted transactions have executed, then lets every pending
/// settlement complete.
///
/// Randomness is split into independent streams (workload, oracle, inclusion
/// lag, faults), so runs that differ only in epsilon share every other draw.
pub fn estimate_fail_rate(trials: u64, cfg: &FailRateConfig) -> FailRateEstimate {
    assert!(trials >= 1, "trials must be positive");
    assert!(cfg.users >= cfg.batch_size && cfg.batch_size > 0, "need at least batch_size users");
    assert!(cfg.settlement_lag >= 1, "settlement lag must be at least one block");
    let (oracle, price_key) = oracle_slot();
    let mut work = stream(cfg.seed, 10);
    let mut oracle_rng = stream(cfg.seed, 11);
    let mut lag_rng = stream(cfg.seed, 12);
    let mut faults = RandomFaults::new(&cfg.freshness, cfg.seed ^ 0x5eed_fa17);
    let presync = PresyncConfig {
        severity: cfg.presync.severity.clone().with_class(oracle, SlotClass::Oracle),
        ..cfg.presync.clone()
    };

    let users: Vec<Address> = (0..cfg.users).map(|i| Address::from_label(&format!("user{i}"))).collect();
    let token = Address::from_label("token");
    let mut state = L2State::default();
    state.bindings = L1Bindings {
        price_feed: Some((oracle, price_key)),
        kyc_registry: None,
    };
    for u in &users {
        state.balances.insert(*u, 1_000_000_000);
    }
    let mut chain = OracleChain::new(cfg.oracle, cfg.oracle_delay_blocks, L1State::default());
    let mut cache = L1Cache::new(DEFAULT_CAPACITY, [oracle]);
    let mut pending = SettlementQueue::default();

    let mut est = FailRateEstimate {
        submitted: 0,
        accepted: 0,
        state_rejected: 0,
        reverted: 0,
        settled: 0,
        settle_failed: 0,
        delays: 0,
        p_fail_accepted: 0.0,
        bound: cfg.freshness.epsilon + cfg.freshness.eta,
        margin: 0.0,
        cache: CacheStats::default(),
    };
    let mut ts = 0u64;
    let mut executed = 0u64;

    loop {
        let head = chain.head();
        for _ in 0..cfg.windows_per_block {
            if executed >= trials {
                break;
            }
            ts += 2_000_000;
            let batch: Vec<Transaction> = sample(&mut work, users.len(), cfg.batch_size)
                .into_iter()
                .map(|i| {
                    let sender = users[i];
                    let to = users[work.gen_range(0..users.len())];
                    let dependent = work.gen::<f64>() < cfg.dependency_intensity;
                    let (f, amount) = if dependent {
                        (Function::BridgeMint, work.gen_range(1..=10))
                    } else {
                        (Function::Transfer, work.gen_range(1..=100))
                    };
                    Transaction {
                        msg: Message::new(token, f.selector())
                            .with_param("to", Value::Addr(to))
                            .with_param("amount", Value::Int(amount)),
                        sig: Signature([0; 32]),
                        meta: Meta {
                            arrival_ts: ts,
                            nonce: state.next_nonce(&sender),
                            gas: 1,
                            sender,
                        },
                    }
                })
                .collect();
            let extra = cfg.freshness.extra_lag(lag_rng.gen::<f64>());
            est.submitted += batch.len() as u64;

            let src = chain.sources();
            let accepted: Vec<usize> = if cfg.guarded {
                let sc = screen_batch(&batch, &state, &mut cache, src, &presync, &mut faults);
                est.delays += sc.delays as u64;
                est.state_rejected += sc.rejected.len() as u64;
                sc.accepted
            } else {
                (0..batch.len()).collect()
            };
            est.accepted += accepted.len() as u64;
            let settle_at = head + cfg.settlement_lag - 1 + extra;
            for i in accepted {
                let reader = cache.reader(src.feed, src.feed_height, Some(src.confirmed));
                match state.apply(&batch[i], &reader) {
                    Ok(dep) if dep.is_empty() => {
                        est.settled += 1;
                        executed += 1;
                    }
                    Ok(dep) => {
                        pending.schedule(settle_at, dep);
                        executed += 1;
                    }
                    Err(_) => est.reverted += 1,
                }
            }
        }

        for (_, ok) in pending.settle_ready(&chain) {
            if ok {
                est.settled += 1;
            } else {
                est.settle_failed += 1;
            }
        }
        if executed >= trials && pending.is_empty() {
            break;
        }

        // Next L1 block, then the (lagging) feed delivers its block to the cache.
        chain.step(&mut oracle_rng);
        chain.deliver(&mut cache);
    }

    let n = est.executed();
    est.p_fail_accepted = if n == 0 { 0.0 } else { est.settle_failed as f64 / n as f64 };
    est.margin = if n == 0 { 0.0 } else { 3.0 * (est.bound / n as f64).sqrt() };
    est.cache = cache.stats;
    est
}
