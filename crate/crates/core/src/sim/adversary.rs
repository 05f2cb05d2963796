//! Sequencer and oracle adversaries.

use rand::Rng;

use crate::chain::{Function, Transaction, Value};
use crate::presync::{oracle_slot, L1Cache, OracleChain};

use super::config::MevMode;

fn swap_amount(tx: &Transaction) -> Option<i64> {
    (Function::from_selector(tx.msg.selector) == Some(Function::Swap))
        .then(|| tx.msg.params.get("amount").and_then(Value::as_int))
        .flatten()
}

/// The order a rational sequencer proposes for a window it has already
/// sorted honestly. With `plain = None` it sees only ciphertexts and has
/// nothing to aim at, so the honest order stands.
///
/// Sandwich: the largest swap is pushed behind everything else, leaving
/// room for the sequencer's own trades in front of it.
pub fn mev_adversary(mode: MevMode, n: usize, plain: Option<&[Transaction]>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if mode != MevMode::Sandwich {
        return order;
    }
    let Some(plain) = plain else { return order };
    let victim = plain
        .iter()
        .enumerate()
        .filter_map(|(i, tx)| swap_amount(tx).map(|a| (a, std::cmp::Reverse(i))))
        .max()
        .map(|(_, std::cmp::Reverse(i))| i);
    if let Some(v) = victim {
        order.remove(v);
        order.push(v);
    }
    order
}

/// Two released positions to exchange after the commitment is public.
pub fn post_commit_swap<R: Rng + ?Sized>(mode: MevMode, n: usize, prob: f64, rng: &mut R) -> Option<(usize, usize)> {
    let u = rng.gen::<f64>();
    if mode != MevMode::PostCommitSwap || n < 2 || u >= prob {
        return None;
    }
    let i = rng.gen_range(0..n);
    let j = (i + rng.gen_range(1..n)) % n;
    Some((i.min(j), i.max(j)))
}

/// The feed as delivered by an oracle that, with probability `inconsistent`,
/// hands the cache a price one tick off.
pub struct ByzantineFeed<R> {
    pub inconsistent: f64,
    rng: R,
    pub corrupted: u64,
}

impl<R: Rng> ByzantineFeed<R> {
    pub fn new(inconsistent: f64, rng: R) -> Self {
        ByzantineFeed {
            inconsistent,
            rng,
            corrupted: 0,
        }
    }

    /// Delivers the chain's current feed block into `cache`. One pair of
    /// draws per call whatever happens.
    pub fn deliver(&mut self, chain: &OracleChain, cache: &mut L1Cache) {
        let bad = self.rng.gen::<f64>() < self.inconsistent;
        let up = self.rng.gen::<bool>();
        let Some(block) = chain.delivery() else { return };
        if bad {
            self.corrupted += 1;
            cache.update(&chain.corrupt(block, up), &[oracle_slot()]);
        } else {
            cache.update(block, &[oracle_slot()]);
        }
    }
}
