use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::types::{Address, SlotKey, SlotValue, Value, Word};

/// Built-in map backed by [`L2State::balances`].
pub const BALANCE_MAP: &str = "balance";
/// Rolling 24h outgoing transfer volume, maintained by the transfer post-hook.
pub const VOLUME_MAP: &str = "Volume24h";
pub const VOLUME_WINDOW_US: u64 = 24 * 3600 * 1_000_000;

/// L1 locations the L2 contracts read through the bridge/oracle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct L1Bindings {
    /// `(contract, slot)` holding the collateral price, scaled by [`PRICE_SCALE`](super::exec::PRICE_SCALE).
    pub price_feed: Option<(Address, SlotKey)>,
    /// L1 eligibility registry; slot key is the left-padded recipient address.
    pub kyc_registry: Option<Address>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct L2State {
    pub balances: BTreeMap<Address, i64>,
    pub maps: BTreeMap<String, BTreeMap<Value, Value>>,
    pub nonces: BTreeMap<Address, u64>,
    pub height: u64,
    pub bindings: L1Bindings,
    /// Last time passed to [`L2State::advance_clock`], microseconds.
    pub clock: u64,
    volume_log: BTreeMap<Address, VecDeque<(u64, i64)>>,
}

impl L2State {
    pub fn balance(&self, a: &Address) -> i64 {
        self.balances.get(a).copied().unwrap_or(0)
    }

    pub fn next_nonce(&self, a: &Address) -> u64 {
        self.nonces.get(a).copied().unwrap_or(0)
    }

    /// Reads `map[key]`; `None` when the key is absent (callers apply the
    /// schema default).
    pub fn lookup(&self, map: &str, key: &Value) -> Option<Value> {
        if map == BALANCE_MAP {
            return key
                .as_addr()
                .and_then(|a| self.balances.get(&a))
                .map(|b| Value::Int(*b));
        }
        self.maps.get(map).and_then(|m| m.get(key)).copied()
    }

    pub fn set(&mut self, map: &str, key: Value, value: Value) {
        if map == BALANCE_MAP {
            if let (Some(a), Some(v)) = (key.as_addr(), value.as_int()) {
                self.balances.insert(a, v);
            }
            return;
        }
        self.maps.entry(map.to_owned()).or_default().insert(key, value);
    }

    pub fn total_supply(&self) -> i128 {
        self.balances.values().map(|&b| b as i128).sum()
    }

    /// Moves the rolling-volume window to `now`, expiring entries older than 24h.
    pub fn advance_clock(&mut self, now: u64) {
        if now <= self.clock {
            return;
        }
        self.clock = now;
        let cutoff = now.saturating_sub(VOLUME_WINDOW_US);
        let mut updates = Vec::new();
        for (addr, log) in self.volume_log.iter_mut() {
            let mut expired = 0i64;
            while log.front().is_some_and(|&(ts, _)| ts < cutoff) {
                expired += log.pop_front().map(|(_, a)| a).unwrap_or(0);
            }
            if expired > 0 {
                updates.push((*addr, expired));
            }
        }
        for (addr, expired) in updates {
            let key = Value::Addr(addr);
            let cur = self.lookup(VOLUME_MAP, &key).and_then(|v| v.as_int()).unwrap_or(0);
            let next = cur - expired;
            let volumes = self.maps.entry(VOLUME_MAP.to_owned()).or_default();
            if next > 0 {
                volumes.insert(key, Value::Int(next));
            } else {
                volumes.remove(&key);
            }
        }
        self.volume_log.retain(|_, log| !log.is_empty());
    }

    /// Post-transfer hook: adds `amount` to the sender's rolling volume.
    pub(crate) fn record_volume(&mut self, sender: Address, ts: u64, amount: i64) -> Option<()> {
        let key = Value::Addr(sender);
        let cur = self.lookup(VOLUME_MAP, &key).and_then(|v| v.as_int()).unwrap_or(0);
        let next = cur.checked_add(amount)?;
        self.set(VOLUME_MAP, key, Value::Int(next));
        self.volume_log.entry(sender).or_default().push_back((ts, amount));
        Some(())
    }
}

/// Read-only access to L1 storage. Missing slots read as zero.
pub trait L1View {
    fn read(&self, contract: &Address, key: &SlotKey) -> SlotValue;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotWrite {
    pub contract: Address,
    pub key: SlotKey,
    pub value: SlotValue,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct L1State {
    pub slots: BTreeMap<(Address, SlotKey), SlotValue>,
    pub block_height: u64,
}

impl L1State {
    pub fn get(&self, contract: &Address, key: &SlotKey) -> SlotValue {
        self.slots.get(&(*contract, *key)).copied().unwrap_or(Word::ZERO)
    }

    pub fn set(&mut self, contract: Address, key: SlotKey, value: SlotValue) {
        self.slots.insert((contract, key), value);
    }

    /// Appends one block: writes applied in order (last write to a slot wins),
    /// height incremented.
    pub fn apply_block(&mut self, writes: &[SlotWrite]) {
        for w in writes {
            self.slots.insert((w.contract, w.key), w.value);
        }
        self.block_height += 1;
    }
}

impl L1View for L1State {
    fn read(&self, contract: &Address, key: &SlotKey) -> SlotValue {
        self.get(contract, key)
    }
}

/// Functional form of [`L1State::apply_block`].
pub fn advance_l1(l1: &L1State, block: &[SlotWrite]) -> L1State {
    let mut next = l1.clone();
    next.apply_block(block);
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle() -> (Address, SlotKey) {
        (Address::from_label("oracle"), Word::named("price"))
    }

    #[test]
    fn empty_block_only_bumps_height() {
        let mut l1 = L1State::default();
        l1.set(oracle().0, oracle().1, Word::from_u128(1000));
        let next = advance_l1(&l1, &[]);
        assert_eq!(next.slots, l1.slots);
        assert_eq!(next.block_height, 1);
    }

    #[test]
    fn single_oracle_write() {
        let (c, k) = oracle();
        let next = advance_l1(
            &L1State::default(),
            &[SlotWrite { contract: c, key: k, value: Word::from_u128(1010) }],
        );
        assert_eq!(next.get(&c, &k).to_u128(), Some(1010));
    }

    #[test]
    fn last_write_in_block_wins() {
        let (c, k) = oracle();
        let writes = [
            SlotWrite { contract: c, key: k, value: Word::from_u128(1) },
            SlotWrite { contract: c, key: k, value: Word::from_u128(2) },
        ];
        // Replay the write list sequentially as the oracle.
        let mut expected = BTreeMap::new();
        for w in &writes {
            expected.insert((w.contract, w.key), w.value);
        }
        let next = advance_l1(&L1State::default(), &writes);
        assert_eq!(next.slots, expected);
        assert_eq!(next.get(&c, &k).to_u128(), Some(2));
    }

    #[test]
    fn volume_window_expires_after_24h() {
        let mut s = L2State::default();
        let a = Address::from_label("alice");
        s.advance_clock(10);
        s.record_volume(a, 10, 400).unwrap();
        s.advance_clock(VOLUME_WINDOW_US + 5);
        assert_eq!(s.lookup(VOLUME_MAP, &Value::Addr(a)), Some(Value::Int(400)));
        s.advance_clock(VOLUME_WINDOW_US + 11);
        assert_eq!(s.lookup(VOLUME_MAP, &Value::Addr(a)), None);
    }
}
