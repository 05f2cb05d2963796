//! One scenario run: workload, plaintext validation, encrypted ordering,
//! execution and delayed settlement on a discrete clock of 2 s windows and
//! 12 s L1 blocks.
//!
//! At the end of window `w` the harness
//! 1. validates window `w`'s arrivals (signature/nonce, rules, state) and
//!    encrypts the accepted ones; the committee stamps them;
//! 2. orders, commits, decrypts, verifies and executes every buffered
//!    envelope stamped before the end of window `w - 1` (stamps may trail
//!    the true arrival by up to the jitter, so collection closes one window
//!    late);
//! 3. on a block boundary, advances L1, lets the feed deliver, and settles
//!    what is due.
//!
//! A batch executes against the L1 view its validator certified (its L1
//! origin) and settles `settlement_lag - 1` blocks after that origin, plus
//! the extra lag drawn under the block-lag freshness model.
//!
//! Baseline mode skips rules, state checks and encryption: FIFO by true
//! arrival, executed right away through the live cache.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{Digest, L1Dependency, L2State, Transaction};
use crate::ordering::{
    commit_order, dkg, measure_fairness, ordering_key, threshold_decrypt, verify_and_release, verify_evidence,
    ArrivalRecord, Committee, CommitteeConfig, EncryptedTx, Group, PublicLog, SchnorrGroup, Secp256k1,
    SlashingEvidence, Verification, WindowKeys,
};
use crate::presync::{
    oracle_slot, screen_batch, CacheStats, L1Cache, OracleChain, PresyncConfig, RandomFaults, SettlementQueue,
    SlotClass, StateReject, DEFAULT_CAPACITY,
};
use crate::rules::{validate_semantic, RuleSet, SemDecision};

use super::adversary::{mev_adversary, post_commit_swap, ByzantineFeed};
use super::config::{GroupChoice, MevMode, Mode, ScenarioConfig};
use super::events::{Event, EventSink, NullSink, Stage};
use super::metrics::Metrics;
use super::profiles::{initial_state, profile_rules};
use super::workload::{Arrival, Injection, Workload};

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub metrics: Metrics,
    pub evidence: Vec<SlashingEvidence>,
    /// Executed transaction ids in execution order.
    pub executed_order: Vec<Digest>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, String> {
    run_scenario_with(cfg, &mut NullSink)
}

pub fn run_scenario_with(cfg: &ScenarioConfig, sink: &mut dyn EventSink) -> Result<ScenarioOutcome, String> {
    run_scenario_rules(cfg, &profile_rules(cfg.rule_profile), sink)
}

/// As [`run_scenario_with`] with an explicit rule set in place of the profile.
pub fn run_scenario_rules(
    cfg: &ScenarioConfig,
    rules: &RuleSet,
    sink: &mut dyn EventSink,
) -> Result<ScenarioOutcome, String> {
    cfg.validate()?;
    Ok(match cfg.committee.group {
        GroupChoice::Sim64 => Sim::new(cfg, SchnorrGroup::sim64(), rules.clone(), sink)?.run(),
        GroupChoice::Secp256k1 => Sim::new(cfg, Secp256k1, rules.clone(), sink)?.run(),
    })
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// The L1 view a validated batch was certified against.
struct Origin {
    head: u64,
    extra_lag: u64,
    cache: L1Cache,
    base: CacheStats,
    refs: usize,
}

struct Staged {
    env: EncryptedTx,
    key_window: u64,
    origin: u64,
    true_arrival: u64,
    injected: Option<Injection>,
}

struct Sim<'s, G: Group> {
    cfg: ScenarioConfig,
    g: G,
    rules: RuleSet,
    presync: PresyncConfig,
    state: L2State,
    workload: Workload,
    chain: OracleChain,
    cache: L1Cache,
    feed: ByzantineFeed<ChaCha8Rng>,
    faults: RandomFaults,
    oracle_rng: ChaCha8Rng,
    lag_rng: ChaCha8Rng,
    crypto_rng: ChaCha8Rng,
    ts_rng: ChaCha8Rng,
    mev_rng: ChaCha8Rng,
    committee: Committee,
    keys: BTreeMap<u64, WindowKeys<G>>,
    log: PublicLog,
    buffer: Vec<Staged>,
    origins: BTreeMap<u64, Origin>,
    queue: SettlementQueue,
    records: Vec<ArrivalRecord>,
    position: u64,
    m: Metrics,
    evidence: Vec<SlashingEvidence>,
    executed_order: Vec<Digest>,
    exec_cache_stats: CacheStats,
    sink: &'s mut dyn EventSink,
}

impl<'s, G: Group> Sim<'s, G> {
    fn new(cfg: &ScenarioConfig, g: G, rules: RuleSet, sink: &'s mut dyn EventSink) -> Result<Self, String> {
        let seed = cfg.seed;
        let (oracle, _) = oracle_slot();
        let ccfg: CommitteeConfig = cfg.committee.to_committee();
        let committee = Committee::new(ccfg, cfg.committee.jitter_us, seed)?;
        let mut setup_rng = stream(seed, 1);
        let inconsistent = if cfg.adversary.oracle() {
            cfg.byzantine_oracle.inconsistent_prob
        } else {
            0.0
        };
        Ok(Sim {
            g,
            rules,
            presync: PresyncConfig {
                severity: cfg.severity.clone().with_class(oracle, SlotClass::Oracle),
                max_retries: cfg.max_retries,
            },
            state: initial_state(cfg.users, &mut setup_rng),
            workload: Workload::new(cfg, stream(seed, 2)),
            chain: OracleChain::new(cfg.oracle, cfg.oracle_delay_blocks, Default::default()),
            cache: L1Cache::new(DEFAULT_CAPACITY, [oracle]),
            feed: ByzantineFeed::new(inconsistent, stream(seed, 3)),
            faults: RandomFaults::new(&cfg.freshness, seed ^ 0x5eed_fa17),
            oracle_rng: stream(seed, 4),
            lag_rng: stream(seed, 5),
            crypto_rng: stream(seed, 6),
            ts_rng: stream(seed, 7),
            mev_rng: stream(seed, 8),
            committee,
            keys: BTreeMap::new(),
            log: PublicLog::default(),
            buffer: Vec::new(),
            origins: BTreeMap::new(),
            queue: SettlementQueue::default(),
            records: Vec::new(),
            position: 0,
            m: Metrics::new(seed, cfg.mode, cfg.adversary),
            evidence: Vec::new(),
            executed_order: Vec::new(),
            exec_cache_stats: CacheStats::default(),
            sink,
            cfg: cfg.clone(),
        })
    }

    fn emit(&mut self, ts: u64, tx_id: Option<Digest>, window: Option<u64>, stage: Stage, outcome: impl Into<String>) {
        self.sink.record(Event {
            ts,
            tx_id,
            window,
            stage,
            outcome: outcome.into(),
        });
    }

    fn mev_mode(&self) -> MevMode {
        if self.cfg.adversary.mev() {
            self.cfg.mev.mode
        } else {
            MevMode::Off
        }
    }

    fn run(mut self) -> ScenarioOutcome {
        let w_us = self.cfg.window_us();
        let wpb = self.cfg.windows_per_block();
        let horizon = self.cfg.duration_windows;
        // Two extra windows flush the ordering pipeline.
        for w in 0..horizon + 2 {
            let now = (w + 1) * w_us;
            self.state.advance_clock(now);
            let arrivals = if w < horizon {
                self.workload.window(w, &self.state)
            } else {
                Vec::new()
            };
            match self.cfg.mode {
                Mode::Guarded => {
                    self.admit(w, now, arrivals);
                    if w >= 1 {
                        self.order_window(w - 1, now);
                    }
                }
                Mode::Baseline => self.baseline_window(w, now, arrivals),
            }
            if (w + 1) % wpb == 0 {
                self.next_block(now);
            }
        }
        self.m.windows = horizon;
        let mut guard = 0;
        while !self.queue.is_empty() && guard < 1_000 {
            let now = self.chain.head() * self.cfg.block_ms * 1_000;
            self.next_block(now);
            guard += 1;
        }
        self.finish()
    }

    fn next_block(&mut self, now: u64) {
        self.chain.step(&mut self.oracle_rng);
        self.feed.deliver(&self.chain, &mut self.cache);
        self.m.l1_blocks += 1;
        for (dep, ok) in self.queue.settle_ready(&self.chain) {
            if ok {
                self.m.counts.settled += 1;
            } else {
                self.m.counts.settle_failed += 1;
            }
            self.emit(now, Some(dep.tx_id), None, Stage::Settle, if ok { "settled" } else { "conflict" });
        }
    }

    fn submit(&mut self, now: u64, a: &Arrival) -> bool {
        let id = a.tx.hash();
        self.m.counts.submitted += 1;
        if a.injected.is_some() {
            self.m.injected.injected += 1;
        }
        self.emit(a.tx.meta.arrival_ts, Some(id), None, Stage::Submit, "arrived");
        let ok = crate::chain::syn_legit(&a.tx, self.workload.registry(), &self.state);
        self.emit(now, Some(id), None, Stage::Syn, if ok { "pass" } else { "reject" });
        if !ok {
            self.m.counts.syn_rejected += 1;
            self.caught(a);
        }
        ok
    }

    fn caught(&mut self, a: &Arrival) {
        if a.injected.is_some() {
            self.m.injected.caught += 1;
        }
    }

    /// Plaintext validation, encryption and stamping for window `w`.
    fn admit(&mut self, w: u64, now: u64, arrivals: Vec<Arrival>) {
        let mut batch: Vec<Arrival> = Vec::with_capacity(arrivals.len());
        for a in arrivals {
            if !self.submit(now, &a) {
                continue;
            }
            let out = validate_semantic(&a.tx, &self.state, &self.rules);
            self.m.costs.predicate_visits += out.visits;
            self.m.costs.rules_evaluated += out.rules_evaluated as u64;
            match out.decision {
                SemDecision::Accept => {
                    self.emit(now, Some(a.tx.hash()), None, Stage::Sem, "pass");
                    batch.push(a);
                }
                SemDecision::Reject { rule_id, .. } => {
                    self.m.counts.sem_rejected += 1;
                    self.caught(&a);
                    self.emit(now, Some(a.tx.hash()), None, Stage::Sem, format!("reject:{rule_id}"));
                }
            }
        }

        let extra_lag = self.cfg.freshness.extra_lag(self.lag_rng.gen::<f64>());
        let keys = dkg(&self.g, &self.committee.cfg, w, &mut self.crypto_rng).expect("validated committee");
        self.m.costs.key_setups += 1;
        let pk = keys.pk_temp;
        self.keys.insert(w, keys);
        if batch.is_empty() {
            return;
        }

        let txs: Vec<Transaction> = batch.iter().map(|a| a.tx.clone()).collect();
        let sc = screen_batch(
            &txs,
            &self.state,
            &mut self.cache,
            self.chain.sources(),
            &self.presync,
            &mut self.faults,
        );
        self.m.counts.state_delayed += sc.delays as u64;
        self.m.costs.state_evaluations += sc.evaluations as u64;
        self.m.costs.diff_entries += sc.diff_entries as u64;
        for (i, why) in &sc.rejected {
            self.m.counts.state_rejected += 1;
            self.caught(&batch[*i]);
            let outcome = match why {
                StateReject::Sandbox { code } => format!("reject:{code}"),
                StateReject::Divergence => "reject:divergence".to_string(),
            };
            self.emit(now, Some(txs[*i].hash()), None, Stage::State, outcome);
        }
        if sc.accepted.is_empty() {
            return;
        }
        self.origins.insert(
            w,
            Origin {
                head: self.chain.head(),
                extra_lag,
                cache: self.cache.clone(),
                base: self.cache.stats,
                refs: sc.accepted.len(),
            },
        );
        for &i in &sc.accepted {
            let a = &batch[i];
            self.emit(now, Some(a.tx.hash()), None, Stage::State, "pass");
            let key = *self.workload.registry().get(&a.tx.meta.sender).expect("registered sender");
            let mut env = crate::ordering::encrypt_tx(&self.g, &a.tx, &pk, &key, &mut self.crypto_rng);
            let stamps = self.committee.observe(&env, a.tx.meta.arrival_ts, &mut self.ts_rng);
            self.m.costs.encryptions += 1;
            self.m.costs.timestamps_signed += stamps.len() as u64;
            env.arrival_ts = self.committee.arrival(&env, &stamps).expect("stamps verify");
            self.buffer.push(Staged {
                env,
                key_window: w,
                origin: w,
                true_arrival: a.tx.meta.arrival_ts,
                injected: a.injected,
            });
        }
    }

    /// Collects window `id`, commits, decrypts, verifies and executes.
    fn order_window(&mut self, id: u64, now: u64) {
        let end = (id + 1) * self.cfg.window_us();
        let (mut win, rest): (Vec<Staged>, Vec<Staged>) =
            std::mem::take(&mut self.buffer).into_iter().partition(|s| s.env.arrival_ts < end);
        self.buffer = rest;
        win.sort_by_key(|s| ordering_key(&s.env));
        // Content-blind: the sequencer only has ciphertexts to look at.
        let proposal = mev_adversary(self.mev_mode(), win.len(), None);
        let win: Vec<Staged> = {
            let mut slots: Vec<Option<Staged>> = win.into_iter().map(Some).collect();
            proposal.iter().map(|&i| slots[i].take().expect("permutation")).collect()
        };
        let committed: Vec<EncryptedTx> = win.iter().map(|s| s.env.clone()).collect();
        for s in &win {
            self.emit(now, Some(s.env.link_hash), Some(id), Stage::Order, "ordered");
        }
        self.m.counts.ordered += win.len() as u64;
        let c = commit_order(id, &committed, now);
        self.log.publish(c).expect("commitments are published in order");
        self.m.slashing.windows_committed += 1;
        self.emit(now, None, Some(id), Stage::Commit, c.comm.to_string());

        let mut plain: Vec<Transaction> = Vec::with_capacity(win.len());
        for s in &win {
            let keys = self.keys.get(&s.key_window).expect("window keys retained");
            let partials = self.committee.partials(&self.g, keys, &s.env);
            self.m.costs.partial_decryptions += partials.len() as u64;
            self.m.costs.decryptions += 1;
            match threshold_decrypt(&self.g, self.committee.cfg.t, &partials, &s.env) {
                Ok(tx) => plain.push(tx),
                Err(_) => break,
            }
        }
        if plain.len() < win.len() {
            self.emit(now, None, Some(id), Stage::Verify, "threshold_unmet");
            self.m.counts.decrypt_failed += win.len() as u64;
            for s in &win {
                self.release_origin(s.origin);
            }
            self.keys.retain(|&k, _| k >= id);
            return;
        }

        let mut released_enc = committed.clone();
        let mut released_plain = plain.clone();
        let deviated = post_commit_swap(self.mev_mode(), win.len(), self.cfg.mev.swap_prob, &mut self.mev_rng);
        if let Some((i, j)) = deviated {
            released_enc.swap(i, j);
            released_plain.swap(i, j);
            self.m.slashing.deviations_injected += 1;
        }
        match verify_and_release(&c, &committed, &released_enc, &released_plain) {
            Verification::Released(_) => {
                self.emit(now, None, Some(id), Stage::Verify, "released");
            }
            Verification::Slashed(ev) => {
                self.m.slashing.events += 1;
                if verify_evidence(&ev).is_ok() {
                    self.m.slashing.verified += 1;
                }
                if deviated.is_none() {
                    self.m.slashing.false_evidence += 1;
                }
                let kind = serde_json::to_string(&ev.kind).unwrap_or_default().replace('"', "");
                self.emit(now, None, Some(id), Stage::Verify, format!("slashed:{kind}"));
                self.evidence.push(*ev);
            }
        }
        // Either way the committed order is what executes.
        for (s, tx) in win.iter().zip(&plain) {
            self.execute_guarded(s, tx, id, now);
        }
        self.keys.retain(|&k, _| k >= id);
    }

    fn release_origin(&mut self, origin: u64) {
        let done = match self.origins.get_mut(&origin) {
            Some(o) => {
                o.refs -= 1;
                o.refs == 0
            }
            None => false,
        };
        if done {
            let o = self.origins.remove(&origin).expect("present");
            let mut delta = o.cache.stats;
            delta.reads -= o.base.reads;
            delta.hits -= o.base.hits;
            delta.misses -= o.base.misses;
            delta.evictions -= o.base.evictions;
            delta.stale_serves -= o.base.stale_serves;
            delta.passthrough -= o.base.passthrough;
            self.exec_cache_stats.merge(&delta);
        }
    }

    fn execute_guarded(&mut self, s: &Staged, tx: &Transaction, window: u64, now: u64) {
        let lag = self.cfg.settlement_lag;
        let delay = self.cfg.oracle_delay_blocks;
        let o = self.origins.get_mut(&s.origin).expect("origin retained");
        let feed_height = o.head.saturating_sub(delay);
        let feed = self.chain.at(feed_height).expect("past block");
        let confirmed = self.chain.at(o.head).expect("past block");
        let settle_at = o.head + lag - 1 + o.extra_lag;
        let result = {
            let reader = o.cache.reader(feed, feed_height, Some(confirmed));
            self.state.apply(tx, &reader)
        };
        self.record_execution(tx, s.true_arrival, s.injected, result, settle_at, window, now);
        self.release_origin(s.origin);
    }

    #[allow(clippy::too_many_arguments)]
    fn record_execution(
        &mut self,
        tx: &Transaction,
        true_arrival: u64,
        injected: Option<Injection>,
        result: Result<L1Dependency, crate::chain::ExecError>,
        settle_at: u64,
        window: u64,
        now: u64,
    ) {
        let id = tx.hash();
        self.records.push(ArrivalRecord {
            arrival: true_arrival,
            position: self.position,
        });
        self.position += 1;
        self.executed_order.push(id);
        if injected.is_some() {
            self.m.injected.missed += 1;
        }
        match result {
            Ok(dep) => {
                self.m.counts.executed += 1;
                self.emit(now, Some(id), Some(window), Stage::Execute, "ok");
                if dep.is_empty() {
                    self.m.counts.settled += 1;
                    self.emit(now, Some(id), None, Stage::Settle, "settled");
                } else {
                    self.queue.schedule(settle_at, dep);
                }
            }
            Err(e) => {
                self.m.counts.reverted += 1;
                self.emit(now, Some(id), Some(window), Stage::Execute, format!("revert:{}", e.code()));
            }
        }
    }

    /// Signature/nonce check, FIFO (or whatever the sequencer prefers, since
    /// it sees plaintext), immediate execution through the live cache.
    fn baseline_window(&mut self, w: u64, now: u64, arrivals: Vec<Arrival>) {
        let extra_lag = self.cfg.freshness.extra_lag(self.lag_rng.gen::<f64>());
        let batch: Vec<Arrival> = arrivals.into_iter().filter(|a| self.submit(now, a)).collect();
        let plain: Vec<Transaction> = batch.iter().map(|a| a.tx.clone()).collect();
        let mut order = mev_adversary(self.mev_mode(), batch.len(), Some(&plain));
        if let Some((i, j)) = post_commit_swap(self.mev_mode(), batch.len(), self.cfg.mev.swap_prob, &mut self.mev_rng) {
            order.swap(i, j);
            self.m.slashing.deviations_injected += 1;
        }
        self.m.counts.ordered += batch.len() as u64;
        let head = self.chain.head();
        let settle_at = head + self.cfg.settlement_lag - 1 + extra_lag;
        for i in order {
            let a = &batch[i];
            self.emit(now, Some(a.tx.hash()), Some(w), Stage::Order, "ordered");
            let src = self.chain.sources();
            let result = {
                let reader = self.cache.reader(src.feed, src.feed_height, Some(src.confirmed));
                self.state.apply(&a.tx, &reader)
            };
            self.record_execution(&a.tx, a.tx.meta.arrival_ts, a.injected, result, settle_at, w, now);
        }
    }

    fn finish(mut self) -> ScenarioOutcome {
        let alpha = self.cfg.committee.alpha();
        let f = measure_fairness(&self.records, alpha);
        self.m.fairness.alpha_us = alpha;
        self.m.fairness.violations = f.violations;
        self.m.fairness.qualifying_pairs = f.qualifying_pairs;
        self.m.fairness.beta_hat = f.beta_hat();
        self.m.counts.in_flight = (self.buffer.len() + self.queue.len()) as u64;
        self.m.finish_settlement(self.cfg.freshness.epsilon, self.cfg.freshness.eta);
        let mut cache = self.cache.stats;
        cache.merge(&self.exec_cache_stats);
        self.m.cache = cache;
        self.m.cache_freshness = cache.freshness();
        self.m.costs.cache_queries = cache.reads;
        self.m.oracle_corrupted_deliveries = self.feed.corrupted;
        self.m.throttled_arrivals = self.workload.throttled;
        ScenarioOutcome {
            metrics: self.m,
            evidence: self.evidence,
            executed_order: self.executed_order,
        }
    }
}
