//! Scenario metrics: a stable JSON schema plus a plain-text table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::presync::CacheStats;

use super::config::{Adversary, Mode};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub submitted: u64,
    pub syn_rejected: u64,
    pub sem_rejected: u64,
    pub state_rejected: u64,
    /// Delay verdicts (re-sync and retry), not a terminal outcome.
    pub state_delayed: u64,
    pub decrypt_failed: u64,
    pub ordered: u64,
    /// Executed without revert; settles later.
    pub executed: u64,
    pub reverted: u64,
    pub settled: u64,
    pub settle_failed: u64,
    /// Neither terminal nor dropped when the run stopped.
    pub in_flight: u64,
}

impl Counts {
    pub fn terminal(&self) -> u64 {
        self.syn_rejected
            + self.sem_rejected
            + self.state_rejected
            + self.decrypt_failed
            + self.reverted
            + self.settled
            + self.settle_failed
    }

    /// submitted = terminal outcomes + in flight.
    pub fn conserved(&self) -> bool {
        self.submitted == self.terminal() + self.in_flight
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionStats {
    pub injected: u64,
    /// Rejected by a validator (signature, rule or state check).
    pub caught: u64,
    /// Reached execution.
    pub missed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SettlementStats {
    /// settle_failed / (settled + settle_failed).
    pub p_fail_accepted: f64,
    /// epsilon + eta.
    pub bound: f64,
    /// 3 * sqrt(bound / N).
    pub margin: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FairnessStats {
    pub alpha_us: u64,
    pub violations: u64,
    pub qualifying_pairs: u64,
    pub beta_hat: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Costs {
    pub predicate_visits: u64,
    pub rules_evaluated: u64,
    pub state_evaluations: u64,
    pub diff_entries: u64,
    pub cache_queries: u64,
    pub key_setups: u64,
    pub encryptions: u64,
    pub timestamps_signed: u64,
    pub partial_decryptions: u64,
    pub decryptions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlashingStats {
    pub windows_committed: u64,
    /// Post-commit deviations the adversary attempted.
    pub deviations_injected: u64,
    pub events: u64,
    /// Evidence that passed the offline check.
    pub verified: u64,
    /// Evidence raised for a window nobody tampered with.
    pub false_evidence: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub mode: Mode,
    pub adversary: Adversary,
    pub windows: u64,
    pub l1_blocks: u64,
    pub counts: Counts,
    pub injected: InjectionStats,
    pub settlement: SettlementStats,
    pub fairness: FairnessStats,
    pub costs: Costs,
    pub slashing: SlashingStats,
    pub cache: CacheStats,
    pub cache_freshness: f64,
    pub oracle_corrupted_deliveries: u64,
    pub throttled_arrivals: u64,
}

impl Metrics {
    pub fn new(seed: u64, mode: Mode, adversary: Adversary) -> Self {
        Metrics {
            seed,
            mode,
            adversary,
            windows: 0,
            l1_blocks: 0,
            counts: Counts::default(),
            injected: InjectionStats::default(),
            settlement: SettlementStats::default(),
            fairness: FairnessStats::default(),
            costs: Costs::default(),
            slashing: SlashingStats::default(),
            cache: CacheStats::default(),
            cache_freshness: 1.0,
            oracle_corrupted_deliveries: 0,
            throttled_arrivals: 0,
        }
    }

    /// Fills the derived settlement fields from the counts.
    pub fn finish_settlement(&mut self, epsilon: f64, eta: f64) {
        let n = self.counts.settled + self.counts.settle_failed;
        let s = &mut self.settlement;
        s.bound = epsilon + eta;
        if n > 0 {
            s.p_fail_accepted = self.counts.settle_failed as f64 / n as f64;
            s.margin = 3.0 * (s.bound / n as f64).sqrt();
        }
        s.within_bound = s.p_fail_accepted <= s.bound + s.margin;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let c = &self.counts;
        let mut row = |k: &str, v: String| {
            let _ = writeln!(s, "{k:<28} {v}");
        };
        row("seed", self.seed.to_string());
        row("mode", format!("{:?}", self.mode).to_lowercase());
        row("adversary", serde_json::to_string(&self.adversary).unwrap_or_default().replace('"', ""));
        row("windows / l1 blocks", format!("{} / {}", self.windows, self.l1_blocks));
        row("submitted", c.submitted.to_string());
        row("syn / sem / state rejected", format!("{} / {} / {}", c.syn_rejected, c.sem_rejected, c.state_rejected));
        row("state delays", c.state_delayed.to_string());
        row("decrypt failed", c.decrypt_failed.to_string());
        row("ordered / executed", format!("{} / {}", c.ordered, c.executed));
        row("reverted", c.reverted.to_string());
        row("settled / settle failed", format!("{} / {}", c.settled, c.settle_failed));
        row("in flight", c.in_flight.to_string());
        if self.injected.injected > 0 {
            let i = &self.injected;
            row("injected (caught/missed)", format!("{} ({}/{})", i.injected, i.caught, i.missed));
        }
        let st = &self.settlement;
        row("p_fail | accepted", format!("{:.6}", st.p_fail_accepted));
        row(
            "bound eps+eta (+3 sigma)",
            format!(
                "{:.6} (+{:.6}) {}",
                st.bound,
                st.margin,
                if st.within_bound { "within" } else { "EXCEEDED" }
            ),
        );
        let f = &self.fairness;
        row(
            "fairness beta_hat",
            format!("{:.3e} ({} / {} pairs, alpha {} us)", f.beta_hat, f.violations, f.qualifying_pairs, f.alpha_us),
        );
        let sl = &self.slashing;
        row("commitments", sl.windows_committed.to_string());
        row(
            "slashing (verified)",
            format!("{} ({}), injected {}, false {}", sl.events, sl.verified, sl.deviations_injected, sl.false_evidence),
        );
        let k = &self.costs;
        row("predicate visits", k.predicate_visits.to_string());
        row("cache queries / diff entries", format!("{} / {}", k.cache_queries, k.diff_entries));
        row(
            "crypto (enc/ts/partial/dec)",
            format!("{}/{}/{}/{}", k.encryptions, k.timestamps_signed, k.partial_decryptions, k.decryptions),
        );
        row("cache freshness", format!("{:.4} ({} stale serves)", self.cache_freshness, self.cache.stale_serves));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conservation_counts_terminal_outcomes() {
        let c = Counts {
            submitted: 10,
            syn_rejected: 1,
            sem_rejected: 2,
            state_rejected: 1,
            state_delayed: 7,
            ordered: 6,
            executed: 5,
            reverted: 1,
            settled: 4,
            settle_failed: 0,
            in_flight: 1,
            decrypt_failed: 0,
        };
        assert_eq!(c.terminal(), 9);
        assert!(c.conserved());
    }

    #[test]
    fn settlement_bound_fields() {
        let mut m = Metrics::new(1, Mode::Guarded, Adversary::None);
        m.counts.settled = 9_900;
        m.counts.settle_failed = 100;
        m.finish_settlement(0.007, 0.003);
        assert!((m.settlement.p_fail_accepted - 0.01).abs() < 1e-12);
        assert!((m.settlement.margin - 3.0 * (0.01f64 / 10_000.0).sqrt()).abs() < 1e-12);
        assert!(m.settlement.within_bound);
        m.finish_settlement(0.0, 0.0);
        assert!(!m.settlement.within_bound);
    }

    #[test]
    fn json_keys_are_stable() {
        let m = Metrics::new(3, Mode::Baseline, Adversary::MevSequencer);
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["mode"], "baseline");
        assert_eq!(v["adversary"], "mev_sequencer");
        assert!(v["counts"]["in_flight"].is_number());
        assert!(m.table().contains("p_fail | accepted"));
    }
}
