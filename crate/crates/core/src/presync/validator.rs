use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Address, DependencyRead, Digest, ExecError, L1State, L1View, L2State, SlotKey, Transaction};

use super::cache::L1Cache;
use super::diff::{compute_diff, decide, sandbox_execute, Decision, DiffEntry, SandboxResult, SeverityConfig, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonModel {
    /// Settlement happens a geometric number of blocks later than the
    /// validator assumed, with P(lag >= 1) = epsilon.
    #[default]
    BlockLag,
    /// Each confirmed-L1 lookup during diffing is served from the stale
    /// cache with probability epsilon, hiding the divergence.
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreshnessParams {
    pub epsilon: f64,
    pub eta: f64,
    pub update_interval_ms: u64,
    pub model: EpsilonModel,
}

impl Default for FreshnessParams {
    fn default() -> Self {
        FreshnessParams {
            epsilon: 0.0,
            eta: 0.0,
            update_interval_ms: 0,
            model: EpsilonModel::BlockLag,
        }
    }
}

impl FreshnessParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("epsilon", self.epsilon), ("eta", self.eta)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }

    /// Extra settlement lag for a batch under the block-lag model, from one
    /// uniform draw: the largest k with u < eps^k. Monotone in epsilon for
    /// a fixed `u`.
    pub fn extra_lag(&self, u: f64) -> u64 {
        if self.model != EpsilonModel::BlockLag {
            return 0;
        }
        let mut k = 0;
        let mut p = self.epsilon;
        while u < p && k < 64 {
            k += 1;
            p *= self.epsilon;
        }
        k
    }
}

/// Where the validator can be wrong on purpose.
pub trait FaultInjector {
    /// Whether to drop this read from the dependency set (a detection miss).
    fn drop_read(&mut self, read: &DependencyRead) -> bool;
    /// Whether the confirmed lookup for this read returns the stale value.
    fn stale_confirmed(&mut self, read: &DependencyRead) -> bool;
}

pub struct NoFaults;

impl FaultInjector for NoFaults {
    fn drop_read(&mut self, _: &DependencyRead) -> bool {
        false
    }
    fn stale_confirmed(&mut self, _: &DependencyRead) -> bool {
        false
    }
}

/// Independent Bernoulli faults driven by two separate streams so that
/// changing one rate does not reshuffle the other's draws.
pub struct RandomFaults {
    eta: f64,
    stale: f64,
    drop_rng: ChaCha8Rng,
    stale_rng: ChaCha8Rng,
}

impl RandomFaults {
    pub fn new(params: &FreshnessParams, seed: u64) -> Self {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(seed);
        drop_rng.set_stream(1);
        let mut stale_rng = ChaCha8Rng::seed_from_u64(seed);
        stale_rng.set_stream(2);
        RandomFaults {
            eta: params.eta,
            stale: if params.model == EpsilonModel::Bernoulli {
                params.epsilon
            } else {
                0.0
            },
            drop_rng,
            stale_rng,
        }
    }
}

impl FaultInjector for RandomFaults {
    fn drop_read(&mut self, _: &DependencyRead) -> bool {
        self.drop_rng.gen::<f64>() < self.eta
    }
    fn stale_confirmed(&mut self, _: &DependencyRead) -> bool {
        self.stale_rng.gen::<f64>() < self.stale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresyncConfig {
    pub severity: SeverityConfig,
    /// Re-evaluations after a `delay` before giving up and rejecting.
    pub max_retries: u32,
}

impl Default for PresyncConfig {
    fn default() -> Self {
        PresyncConfig {
            severity: SeverityConfig::default(),
            max_retries: 3,
        }
    }
}

/// The L1 sources the validator consults.
#[derive(Clone, Copy)]
pub struct L1Sources<'a> {
    /// Backing feed for cache misses (possibly lagging).
    pub feed: &'a dyn L1View,
    pub feed_height: u64,
    /// Confirmed L1 head.
    pub confirmed: &'a L1State,
}

#[derive(Debug, Clone)]
pub struct StateCheck {
    pub decision: Decision,
    /// Evaluations performed (1 + retries).
    pub attempts: u32,
    /// Delay verdicts seen along the way.
    pub delays: u32,
    /// True when the final reject came from exhausting the retry budget.
    pub exhausted: bool,
    pub sandbox: SandboxResult,
    /// Dependency reads removed by fault injection in the final attempt.
    pub dropped: usize,
    /// Batch indices whose reads touch a triggering slot.
    pub implicated: Vec<usize>,
}

impl StateCheck {
    pub fn failed(&self) -> Vec<(usize, ExecError)> {
        self.sandbox.failed().map(|(i, e)| (i, e.clone())).collect()
    }
}

fn implicated(sb: &SandboxResult, delta: &[DiffEntry]) -> Vec<usize> {
    let slots: BTreeSet<(Address, SlotKey)> = delta.iter().map(|e| (e.addr, e.key)).collect();
    sb.per_tx
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            t.outcome
                .as_ref()
                .is_ok_and(|reads| reads.iter().any(|r| slots.contains(&(r.contract, r.key))))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Sandbox, diff and decide, re-syncing the divergent slots and retrying on
/// `delay` up to `cfg.max_retries` times.
pub fn validate_state(
    batch: &[Transaction],
    s: &L2State,
    cache: &mut L1Cache,
    src: L1Sources<'_>,
    cfg: &PresyncConfig,
    faults: &mut dyn FaultInjector,
) -> StateCheck {
    let mut delays = 0;
    let mut attempt = 0;
    loop {
        attempt += 1;
        let sb = {
            let reader = cache.reader(src.feed, src.feed_height, Some(src.confirmed));
            sandbox_execute(batch, s, &reader)
        };
        let mut dropped = 0;
        let mut checked: Vec<DependencyRead> = Vec::with_capacity(sb.deps.len());
        for r in &sb.deps {
            if faults.drop_read(r) {
                dropped += 1;
            } else {
                checked.push(*r);
            }
        }
        let stale_view = StaleMask::new(&checked, src.confirmed, faults);
        let delta = compute_diff(&checked, &stale_view);
        let decision = decide(&delta, &cfg.severity);
        let (decision, exhausted) = match decision.verdict {
            Verdict::Accept | Verdict::Reject => (decision, false),
            Verdict::Delay => {
                delays += 1;
                if attempt > cfg.max_retries {
                    (
                        Decision {
                            verdict: Verdict::Reject,
                            ..decision
                        },
                        true,
                    )
                } else {
                    let slots: Vec<(Address, SlotKey)> = delta.iter().map(|e| (e.addr, e.key)).collect();
                    cache.update(src.confirmed, &slots);
                    continue;
                }
            }
        };
        return StateCheck {
            implicated: implicated(&sb, &decision.triggering_entries),
            decision,
            attempts: attempt,
            delays,
            exhausted,
            dropped,
            sandbox: sb,
        };
    }
}

/// Confirmed view in which some reads are masked by their projected value.
struct StaleMask<'a> {
    confirmed: &'a L1State,
    masked: BTreeSet<(Address, SlotKey)>,
    projected: Vec<DependencyRead>,
}

impl<'a> StaleMask<'a> {
    fn new(reads: &[DependencyRead], confirmed: &'a L1State, faults: &mut dyn FaultInjector) -> Self {
        let mut masked = BTreeSet::new();
        for r in reads {
            if faults.stale_confirmed(r) {
                masked.insert((r.contract, r.key));
            }
        }
        StaleMask {
            confirmed,
            masked,
            projected: reads.to_vec(),
        }
    }
}

impl L1View for StaleMask<'_> {
    fn read(&self, contract: &Address, key: &SlotKey) -> crate::chain::SlotValue {
        if self.masked.contains(&(*contract, *key)) {
            if let Some(r) = self.projected.iter().find(|r| r.contract == *contract && r.key == *key) {
                return r.value;
            }
        }
        self.confirmed.read(contract, key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StateReject {
    /// Execution failed in the sandbox.
    Sandbox { code: String },
    /// The tx read a slot in a rejected difference set.
    Divergence,
}

#[derive(Debug, Clone, Default)]
pub struct Screening {
    /// Indices into the input batch, in batch order.
    pub accepted: Vec<usize>,
    pub rejected: Vec<(usize, StateReject)>,
    pub delays: u32,
    pub evaluations: u32,
    pub dropped_reads: usize,
    pub diff_entries: usize,
}

/// Batch-level screening with per-transaction attribution: on `reject` the
/// implicated and failing transactions are removed and the rest re-validated.
pub fn screen_batch(
    batch: &[Transaction],
    s: &L2State,
    cache: &mut L1Cache,
    src: L1Sources<'_>,
    cfg: &PresyncConfig,
    faults: &mut dyn FaultInjector,
) -> Screening {
    let mut out = Screening::default();
    let mut remaining: Vec<usize> = (0..batch.len()).collect();
    while !remaining.is_empty() {
        let sub: Vec<Transaction> = remaining.iter().map(|&i| batch[i].clone()).collect();
        let check = validate_state(&sub, s, cache, src, cfg, faults);
        out.delays += check.delays;
        out.evaluations += check.attempts;
        out.dropped_reads += check.dropped;
        out.diff_entries += check.decision.triggering_entries.len();
        let mut removed: BTreeSet<usize> = BTreeSet::new();
        for (i, e) in check.failed() {
            removed.insert(i);
            out.rejected.push((remaining[i], StateReject::Sandbox { code: e.code().into() }));
        }
        if check.decision.verdict == Verdict::Accept {
            out.accepted = remaining
                .iter()
                .enumerate()
                .filter(|(i, _)| !removed.contains(i))
                .map(|(_, &b)| b)
                .collect();
            break;
        }
        let mut culprits = check.implicated.clone();
        if culprits.is_empty() && removed.is_empty() {
            // Nothing to attribute the divergence to: reject everything left.
            culprits = (0..remaining.len()).collect();
        }
        for i in culprits {
            if removed.insert(i) {
                out.rejected.push((remaining[i], StateReject::Divergence));
            }
        }
        remaining = remaining
            .iter()
            .enumerate()
            .filter(|(i, _)| !removed.contains(i))
            .map(|(_, &b)| b)
            .collect();
    }
    out.rejected.sort_by_key(|(i, _)| *i);
    out
}

/// Ids of the transactions [`screen_batch`] accepted.
pub fn accepted_ids(batch: &[Transaction], sc: &Screening) -> Vec<Digest> {
    sc.accepted.iter().map(|&i| batch[i].hash()).collect()
}
