//! Committee configuration, per-window dealer key setup, signed arrival
//! timestamps and share withholding.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::chain::{Address, SigningKey};

use super::envelope::EncryptedTx;
use super::group::Group;
use super::kem::{partial_decrypt, PartialDecryption};
use super::shamir::split;

const TS_DOMAIN: &[u8] = b"tollgate/arrival-ts/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeConfig {
    pub n: u32,
    pub t: u32,
    /// Member indices in `1..=n`.
    pub byzantine: BTreeSet<u32>,
    /// Microseconds.
    pub clock_skew_bound_alpha: u64,
}

impl CommitteeConfig {
    pub fn honest(n: u32, t: u32, alpha: u64) -> Self {
        CommitteeConfig {
            n,
            t,
            byzantine: BTreeSet::new(),
            clock_skew_bound_alpha: alpha,
        }
    }

    /// The last `f` members are Byzantine.
    pub fn with_byzantine_count(mut self, f: u32) -> Self {
        self.byzantine = (self.n.saturating_sub(f) + 1..=self.n).collect();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.t == 0 || self.t > self.n {
            return Err(format!("threshold t={} must satisfy 1 <= t <= n={}", self.t, self.n));
        }
        if let Some(bad) = self.byzantine.iter().find(|&&i| i == 0 || i > self.n) {
            return Err(format!("byzantine member {bad} is outside 1..={}", self.n));
        }
        Ok(())
    }

    pub fn honest_majority(&self) -> bool {
        2 * self.byzantine.len() < self.n as usize
    }

    pub fn honest_count(&self) -> u32 {
        self.n - self.byzantine.len() as u32
    }

    pub fn is_byzantine(&self, member: u32) -> bool {
        self.byzantine.contains(&member)
    }
}

/// Per-window key material from a simulated trusted dealer.
#[derive(Debug, Clone)]
pub struct WindowKeys<G: Group> {
    pub window_id: u64,
    pub pk_temp: G::Element,
    pub shares: BTreeMap<u32, G::Scalar>,
}

/// Dealer-simulated key generation. The security parameter is the bit
/// length of the group order.
pub fn dkg<G: Group, R: RngCore + ?Sized>(
    g: &G,
    cfg: &CommitteeConfig,
    window_id: u64,
    rng: &mut R,
) -> Result<WindowKeys<G>, String> {
    cfg.validate()?;
    let secret = g.random_scalar(rng);
    let shares = split(g, secret, cfg.n, cfg.t, rng).map_err(|e| e.to_string())?;
    Ok(WindowKeys {
        window_id,
        pk_temp: g.pow(&g.generator(), &secret),
        shares: shares.into_iter().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedTimestamp {
    pub member: u32,
    pub ts: u64,
    #[serde(with = "hex::serde")]
    pub tag: [u8; 32],
}

/// Committee members with their timestamp-signing keys and clock model.
///
/// Honest members observe the true arrival plus uniform jitter in
/// `[-jitter_us, jitter_us]`. Byzantine members all push one tx the same
/// way, far beyond the jitter, and withhold their decryption shares.
#[derive(Debug, Clone)]
pub struct Committee {
    pub cfg: CommitteeConfig,
    pub jitter_us: u64,
    keys: Vec<SigningKey>,
}

impl Committee {
    pub fn new(cfg: CommitteeConfig, jitter_us: u64, seed: u64) -> Result<Self, String> {
        cfg.validate()?;
        let keys = (1..=cfg.n)
            .map(|i| SigningKey::derive(seed, Address::from_label(&format!("committee-{i}"))))
            .collect();
        Ok(Committee { cfg, jitter_us, keys })
    }

    fn key(&self, member: u32) -> Option<&SigningKey> {
        member.checked_sub(1).and_then(|i| self.keys.get(i as usize))
    }

    fn ts_parts(e: &EncryptedTx, member: u32, ts: u64) -> [Vec<u8>; 4] {
        [
            TS_DOMAIN.to_vec(),
            member.to_be_bytes().to_vec(),
            e.ct_hash().0.to_vec(),
            ts.to_be_bytes().to_vec(),
        ]
    }

    fn sign_ts(&self, e: &EncryptedTx, member: u32, ts: u64) -> SignedTimestamp {
        let parts = Self::ts_parts(e, member, ts);
        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        SignedTimestamp {
            member,
            ts,
            tag: self.key(member).expect("member index in range").mac(&refs),
        }
    }

    pub fn verify_ts(&self, e: &EncryptedTx, st: &SignedTimestamp) -> bool {
        let parts = Self::ts_parts(e, st.member, st.ts);
        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        self.key(st.member).is_some_and(|k| k.verify(&refs, &st.tag))
    }

    /// Every member's signed observation of `e` arriving at `true_arrival`.
    pub fn observe<R: Rng + ?Sized>(&self, e: &EncryptedTx, true_arrival: u64, rng: &mut R) -> Vec<SignedTimestamp> {
        let j = self.jitter_us as i128;
        let push_late = rng.gen_bool(0.5);
        let shove = 8 * j + 1_000_000;
        (1..=self.cfg.n)
            .map(|m| {
                let offset = if self.cfg.is_byzantine(m) {
                    if push_late {
                        shove
                    } else {
                        -shove
                    }
                } else {
                    rng.gen_range(-j..=j)
                };
                let ts = (true_arrival as i128 + offset).clamp(1, u64::MAX as i128) as u64;
                self.sign_ts(e, m, ts)
            })
            .collect()
    }

    /// Lower median of the verified timestamps, one per member. With fewer
    /// than half the members Byzantine it lies between two honest readings.
    pub fn arrival(&self, e: &EncryptedTx, stamps: &[SignedTimestamp]) -> Option<u64> {
        let mut by_member = BTreeMap::new();
        for st in stamps.iter().filter(|st| self.verify_ts(e, st)) {
            by_member.entry(st.member).or_insert(st.ts);
        }
        let mut ts: Vec<u64> = by_member.into_values().collect();
        if ts.is_empty() {
            return None;
        }
        ts.sort_unstable();
        Some(ts[(ts.len() - 1) / 2])
    }

    /// Partial decryptions from the members that cooperate.
    pub fn partials<G: Group>(&self, g: &G, keys: &WindowKeys<G>, e: &EncryptedTx) -> Vec<PartialDecryption> {
        keys.shares
            .iter()
            .filter(|(m, _)| !self.cfg.is_byzantine(**m))
            .filter_map(|(m, x)| partial_decrypt(g, *m, x, &e.ct_k).ok())
            .collect()
    }
}
