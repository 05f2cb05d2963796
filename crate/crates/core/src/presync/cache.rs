use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::{Address, L1State, L1View, SlotKey, SlotValue};

pub const DEFAULT_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub value: SlotValue,
    /// L1 height at which `value` was observed.
    pub block_seen: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub reads: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    /// Reads whose served value differed from confirmed L1.
    pub stale_serves: u64,
    /// Reads of untracked contracts, forwarded to the feed.
    pub passthrough: u64,
}

impl CacheStats {
    /// Fraction of reads that matched confirmed L1 (1.0 when nothing was read).
    pub fn freshness(&self) -> f64 {
        if self.reads == 0 {
            1.0
        } else {
            1.0 - self.stale_serves as f64 / self.reads as f64
        }
    }

    pub fn merge(&mut self, o: &CacheStats) {
        self.reads += o.reads;
        self.hits += o.hits;
        self.misses += o.misses;
        self.evictions += o.evictions;
        self.stale_serves += o.stale_serves;
        self.passthrough += o.passthrough;
    }
}

/// Write-through L1 slot cache with per-contract LRU eviction.
///
/// Updates never replace an entry with an older observation, so a slot
/// synced from confirmed L1 is not rolled back by a lagging feed.
#[derive(Debug, Clone)]
pub struct L1Cache {
    capacity: usize,
    tracked: BTreeSet<Address>,
    entries: BTreeMap<(Address, SlotKey), (CacheEntry, u64)>,
    lru: BTreeMap<Address, BTreeMap<u64, SlotKey>>,
    tick: u64,
    pub stats: CacheStats,
}

impl L1Cache {
    pub fn new(capacity: usize, tracked: impl IntoIterator<Item = Address>) -> Self {
        assert!(capacity > 0, "cache capacity must be positive");
        L1Cache {
            capacity,
            tracked: tracked.into_iter().collect(),
            entries: BTreeMap::new(),
            lru: BTreeMap::new(),
            tick: 0,
            stats: CacheStats::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_tracked(&self, contract: &Address) -> bool {
        self.tracked.contains(contract)
    }

    pub fn track(&mut self, contract: Address) {
        self.tracked.insert(contract);
    }

    /// Inspects an entry without touching recency or stats.
    pub fn peek(&self, contract: &Address, key: &SlotKey) -> Option<CacheEntry> {
        self.entries.get(&(*contract, *key)).map(|(e, _)| *e)
    }

    pub fn len_for(&self, contract: &Address) -> usize {
        self.lru.get(contract).map_or(0, BTreeMap::len)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keys of `contract`, least recently used first.
    pub fn lru_order(&self, contract: &Address) -> Vec<SlotKey> {
        self.lru.get(contract).map(|m| m.values().copied().collect()).unwrap_or_default()
    }

    fn touch(&mut self, contract: Address, key: SlotKey) {
        self.tick += 1;
        let tick = self.tick;
        if let Some((_, last)) = self.entries.get_mut(&(contract, key)) {
            let order = self.lru.entry(contract).or_default();
            order.remove(last);
            order.insert(tick, key);
            *last = tick;
        }
    }

    fn insert(&mut self, contract: Address, key: SlotKey, entry: CacheEntry) {
        if let Some((existing, _)) = self.entries.get_mut(&(contract, key)) {
            if entry.block_seen >= existing.block_seen {
                *existing = entry;
            }
            self.touch(contract, key);
            return;
        }
        let order = self.lru.entry(contract).or_default();
        if order.len() >= self.capacity {
            let (_, victim) = order.pop_first().expect("non-empty at capacity");
            self.entries.remove(&(contract, victim));
            self.stats.evictions += 1;
        }
        self.tick += 1;
        order.insert(self.tick, key);
        self.entries.insert((contract, key), (entry, self.tick));
    }

    /// Write-through update: refreshes `changed` slots of tracked contracts
    /// with their values in `l1`, observed at `l1.block_height`.
    pub fn update(&mut self, l1: &L1State, changed: &[(Address, SlotKey)]) {
        for &(contract, key) in changed {
            if !self.tracked.contains(&contract) {
                continue;
            }
            let entry = CacheEntry {
                value: l1.get(&contract, &key),
                block_seen: l1.block_height,
            };
            self.insert(contract, key, entry);
        }
    }

    /// Serves one read. Misses load from `feed`, observed at `feed_height`.
    /// When `confirmed` is given, reads that disagree with it count as stale.
    pub fn read(
        &mut self,
        contract: &Address,
        key: &SlotKey,
        feed: &dyn L1View,
        feed_height: u64,
        confirmed: Option<&dyn L1View>,
    ) -> SlotValue {
        self.stats.reads += 1;
        let value = if !self.tracked.contains(contract) {
            self.stats.passthrough += 1;
            feed.read(contract, key)
        } else if let Some((e, _)) = self.entries.get(&(*contract, *key)) {
            let v = e.value;
            self.stats.hits += 1;
            self.touch(*contract, *key);
            v
        } else {
            self.stats.misses += 1;
            let v = feed.read(contract, key);
            self.insert(
                *contract,
                *key,
                CacheEntry {
                    value: v,
                    block_seen: feed_height,
                },
            );
            v
        };
        if let Some(c) = confirmed {
            if c.read(contract, key) != value {
                self.stats.stale_serves += 1;
            }
        }
        value
    }

    /// Borrows the cache as an [`L1View`].
    pub fn reader<'a>(
        &'a mut self,
        feed: &'a dyn L1View,
        feed_height: u64,
        confirmed: Option<&'a dyn L1View>,
    ) -> CacheReader<'a> {
        CacheReader {
            cache: RefCell::new(self),
            feed,
            feed_height,
            confirmed,
        }
    }
}

pub struct CacheReader<'a> {
    cache: RefCell<&'a mut L1Cache>,
    feed: &'a dyn L1View,
    feed_height: u64,
    confirmed: Option<&'a dyn L1View>,
}

impl L1View for CacheReader<'_> {
    fn read(&self, contract: &Address, key: &SlotKey) -> SlotValue {
        self.cache
            .borrow_mut()
            .read(contract, key, self.feed, self.feed_height, self.confirmed)
    }
}
