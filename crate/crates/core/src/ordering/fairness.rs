//! Empirical (alpha, beta) fairness: among pairs whose true arrivals are
//! more than alpha apart, the fraction ordered against arrival.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalRecord {
    /// True arrival time, microseconds.
    pub arrival: u64,
    /// Final position across all windows (any strictly increasing numbering).
    pub position: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub violations: u64,
    pub qualifying_pairs: u64,
}

impl FairnessReport {
    /// violations / qualifying pairs, 0 when nothing qualifies.
    pub fn beta_hat(&self) -> f64 {
        if self.qualifying_pairs == 0 {
            0.0
        } else {
            self.violations as f64 / self.qualifying_pairs as f64
        }
    }

    pub fn merge(&mut self, o: &FairnessReport) {
        self.violations += o.violations;
        self.qualifying_pairs += o.qualifying_pairs;
    }
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn below(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Counts pairs (i, j) with `arrival_i < arrival_j - alpha`, and among those
/// the ones where j ends up before i. O(n log n).
pub fn measure_fairness(log: &[ArrivalRecord], alpha: u64) -> FairnessReport {
    let mut by_arrival: Vec<&ArrivalRecord> = log.iter().collect();
    by_arrival.sort_by_key(|r| r.arrival);
    let mut positions: Vec<u64> = log.iter().map(|r| r.position).collect();
    positions.sort_unstable();
    positions.dedup();
    let rank = |p: u64| positions.binary_search(&p).expect("position present");

    let mut tree = Fenwick(vec![0; positions.len() + 1]);
    let mut inserted = 0u64;
    let mut next = 0;
    let mut report = FairnessReport::default();
    for r in &by_arrival {
        while next < by_arrival.len() && by_arrival[next].arrival.saturating_add(alpha) < r.arrival {
            tree.add(rank(by_arrival[next].position));
            inserted += 1;
            next += 1;
        }
        report.qualifying_pairs += inserted;
        report.violations += inserted - tree.below(rank(r.position) + 1);
    }
    report
}
