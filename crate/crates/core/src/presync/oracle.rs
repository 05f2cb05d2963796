//! Simulated L1 with a drifting oracle price, a feed that lags it into the
//! cache, and a queue of pending settlements.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{settle_l1, Address, L1Dependency, L1State, SlotKey, SlotWrite, Word};

use super::cache::L1Cache;
use super::validator::L1Sources;

/// Oracle price process: each block the price moves with probability
/// `change_prob` by a whole number of ticks (1..=max_ticks), reflecting at
/// `floor`/`ceil`. Any two distinct prices therefore differ by at least
/// `tick`, i.e. by at least `min_drift_bps()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleWalk {
    pub initial: u64,
    pub change_prob: f64,
    pub tick: u64,
    pub max_ticks: u32,
    pub floor: u64,
    pub ceil: u64,
}

impl Default for OracleWalk {
    fn default() -> Self {
        OracleWalk {
            initial: 1_000_000,
            change_prob: 0.25,
            tick: 1_500,
            max_ticks: 2,
            floor: 800_000,
            ceil: 1_250_000,
        }
    }
}

impl OracleWalk {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.change_prob) {
            return Err("oracle change_prob must lie in [0, 1]".into());
        }
        if self.tick == 0 || self.max_ticks == 0 {
            return Err("oracle tick and max_ticks must be positive".into());
        }
        let span = self.tick * self.max_ticks as u64;
        if self.floor == 0 || self.floor + 2 * span > self.ceil || !(self.floor..=self.ceil).contains(&self.initial) {
            return Err("oracle range must satisfy 0 < floor <= initial <= ceil with room for two steps".into());
        }
        Ok(())
    }

    /// Next price. Always consumes the same number of draws.
    pub fn step(&self, price: u64, rng: &mut impl Rng) -> u64 {
        let moves = rng.gen::<f64>() < self.change_prob;
        let ticks = rng.gen_range(1..=self.max_ticks) as u64;
        let up = rng.gen::<bool>();
        if !moves {
            return price;
        }
        let k = ticks * self.tick;
        let (a, b) = (price + k, price.saturating_sub(k));
        let (first, second) = if up { (a, b) } else { (b, a) };
        if (self.floor..=self.ceil).contains(&first) {
            first
        } else {
            second
        }
    }

    pub fn min_drift_bps(&self) -> f64 {
        self.tick as f64 * 10_000.0 / self.ceil as f64
    }
}

pub fn oracle_slot() -> (Address, SlotKey) {
    (Address::from_label("price-oracle"), Word::named("price"))
}


/// Confirmed L1 history with the oracle price walking once per block.
#[derive(Debug, Clone)]
pub struct OracleChain {
    walk: OracleWalk,
    slot: (Address, SlotKey),
    delay: u64,
    history: Vec<L1State>,
    price: u64,
}

impl OracleChain {
    /// `genesis` may carry other slots; the price slot is set to `walk.initial`.
    pub fn new(walk: OracleWalk, feed_delay_blocks: u64, mut genesis: L1State) -> Self {
        let slot = oracle_slot();
        genesis.set(slot.0, slot.1, Word::from_u128(walk.initial as u128));
        OracleChain {
            walk,
            slot,
            delay: feed_delay_blocks,
            history: vec![genesis],
            price: walk.initial,
        }
    }

    pub fn head(&self) -> u64 {
        self.history.len() as u64 - 1
    }

    pub fn price(&self) -> u64 {
        self.price
    }

    pub fn confirmed(&self) -> &L1State {
        self.history.last().expect("history starts with genesis")
    }

    pub fn feed_height(&self) -> u64 {
        self.head().saturating_sub(self.delay)
    }

    /// What the lagging feed currently reports.
    pub fn feed(&self) -> &L1State {
        &self.history[self.feed_height() as usize]
    }

    pub fn at(&self, height: u64) -> Option<&L1State> {
        self.history.get(height as usize)
    }

    pub fn sources(&self) -> L1Sources<'_> {
        L1Sources {
            feed: self.feed(),
            feed_height: self.feed_height(),
            confirmed: self.confirmed(),
        }
    }

    /// Appends the next block.
    pub fn step(&mut self, rng: &mut impl Rng) {
        let next_price = self.walk.step(self.price, rng);
        let mut next = self.confirmed().clone();
        next.apply_block(&[SlotWrite {
            contract: self.slot.0,
            key: self.slot.1,
            value: Word::from_u128(next_price as u128),
        }]);
        self.price = next_price;
        self.history.push(next);
    }

    /// The block the feed hands to the cache at the current head: block
    /// `head - delay`, when its price differs from its parent's.
    pub fn delivery(&self) -> Option<&L1State> {
        let h = self.head().checked_sub(self.delay)? as usize;
        let read = |b: &L1State| b.get(&self.slot.0, &self.slot.1);
        (h == 0 || read(&self.history[h]) != read(&self.history[h - 1])).then(|| &self.history[h])
    }

    /// Honest feed: write the delivered block through to the cache.
    pub fn deliver(&self, cache: &mut L1Cache) {
        if let Some(b) = self.delivery() {
            cache.update(b, &[self.slot]);
        }
    }

    /// A copy of `block` whose price is off by one tick (kept in range).
    pub fn corrupt(&self, block: &L1State, up: bool) -> L1State {
        let p = block.get(&self.slot.0, &self.slot.1).to_u128().unwrap_or(0) as u64;
        let w = &self.walk;
        let (hi, lo) = (p + w.tick, p.saturating_sub(w.tick));
        let q = if (up && hi <= w.ceil) || lo < w.floor { hi } else { lo };
        let mut out = block.clone();
        out.set(self.slot.0, self.slot.1, Word::from_u128(q as u128));
        out
    }
}

/// Executed dependencies waiting for their settlement height.
#[derive(Debug, Clone, Default)]
pub struct SettlementQueue {
    pending: BTreeMap<u64, Vec<L1Dependency>>,
    len: usize,
}

impl SettlementQueue {
    pub fn schedule(&mut self, at: u64, dep: L1Dependency) {
        self.pending.entry(at).or_default().push(dep);
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Checks every dependency whose height the chain has produced.
    pub fn settle_ready(&mut self, chain: &OracleChain) -> Vec<(L1Dependency, bool)> {
        let mut out = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            let Some(at) = chain.at(*entry.key()) else { break };
            for dep in entry.remove() {
                let ok = settle_l1(&dep, at).is_settled();
                out.push((dep, ok));
            }
        }
        self.len -= out.len();
        out
    }
}
