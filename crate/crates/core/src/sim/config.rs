//! Scenario configuration. Every field has a default, so a TOML file only
//! needs the keys it changes.

use serde::{Deserialize, Serialize};

use crate::ordering::CommitteeConfig;
use crate::presync::{FreshnessParams, OracleWalk, SeverityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleProfile {
    /// 5 predicates.
    #[default]
    Simple,
    /// 10 predicates.
    Medium,
    /// 18 predicates.
    Complex,
}

impl RuleProfile {
    pub fn rule_count(self) -> usize {
        match self {
            RuleProfile::Simple => 5,
            RuleProfile::Medium => 10,
            RuleProfile::Complex => 18,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversary {
    #[default]
    None,
    MevSequencer,
    ByzantineOracle,
    MaliciousUsers,
    Combined,
}

impl Adversary {
    pub fn mev(self) -> bool {
        matches!(self, Adversary::MevSequencer | Adversary::Combined)
    }

    pub fn oracle(self) -> bool {
        matches!(self, Adversary::ByzantineOracle | Adversary::Combined)
    }

    pub fn users(self) -> bool {
        matches!(self, Adversary::MaliciousUsers | Adversary::Combined)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full pipeline.
    #[default]
    Guarded,
    /// Signature/nonce checks only, FIFO on plaintext, no encryption.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupChoice {
    #[default]
    Sim64,
    Secp256k1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommitteeSection {
    pub n: u32,
    pub t: u32,
    /// Share of members that are Byzantine (rounded down to whole members).
    pub byzantine_fraction: f64,
    /// Honest clock jitter, microseconds.
    pub jitter_us: u64,
    /// Fairness tolerance; defaults to twice the jitter.
    pub alpha_us: Option<u64>,
    pub group: GroupChoice,
    /// When set, a Byzantine majority is a config error.
    pub assume_honest_majority: bool,
}

impl Default for CommitteeSection {
    fn default() -> Self {
        CommitteeSection {
            n: 4,
            t: 3,
            byzantine_fraction: 0.0,
            jitter_us: 50_000,
            alpha_us: None,
            group: GroupChoice::Sim64,
            assume_honest_majority: true,
        }
    }
}

impl CommitteeSection {
    pub fn byzantine_count(&self) -> u32 {
        (self.byzantine_fraction * self.n as f64 + 1e-9).floor() as u32
    }

    pub fn alpha(&self) -> u64 {
        self.alpha_us.unwrap_or(2 * self.jitter_us)
    }

    pub fn to_committee(&self) -> CommitteeConfig {
        CommitteeConfig::honest(self.n, self.t, self.alpha()).with_byzantine_count(self.byzantine_count())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MevMode {
    Off,
    /// Move the largest swap behind everything else in its window.
    #[default]
    Sandwich,
    /// Swap two released positions after the commitment is published.
    PostCommitSwap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MevSection {
    pub mode: MevMode,
    /// Per-window chance of a post-commit swap.
    pub swap_prob: f64,
}

impl Default for MevSection {
    fn default() -> Self {
        MevSection {
            mode: MevMode::Sandwich,
            swap_prob: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ByzantineOracleSection {
    /// Chance that a feed delivery carries a price one tick off.
    pub inconsistent_prob: f64,
}

impl Default for ByzantineOracleSection {
    fn default() -> Self {
        ByzantineOracleSection { inconsistent_prob: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaliciousSection {
    /// Share of arrivals replaced by labeled invalid transactions.
    pub fraction: f64,
}

impl Default for MaliciousSection {
    fn default() -> Self {
        MaliciousSection { fraction: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Mean arrivals per simulated second.
    pub tps: f64,
    pub duration_windows: u64,
    pub rule_profile: RuleProfile,
    /// Share of bridging and swap transactions, which read the oracle.
    pub dependency_intensity: f64,
    pub oracle_delay_blocks: u64,
    pub adversary: Adversary,
    pub mode: Mode,
    /// Blocks between inclusion and settlement (at least 1).
    pub settlement_lag: u64,
    pub window_ms: u64,
    pub block_ms: u64,
    pub users: usize,
    /// Independent replicas for `simulate` (Monte Carlo when > 1).
    pub trials: u32,
    pub committee: CommitteeSection,
    pub freshness: FreshnessParams,
    pub severity: SeverityConfig,
    pub max_retries: u32,
    pub oracle: OracleWalk,
    pub mev: MevSection,
    pub byzantine_oracle: ByzantineOracleSection,
    pub malicious: MaliciousSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            tps: 16.0,
            duration_windows: 600,
            rule_profile: RuleProfile::Simple,
            dependency_intensity: 0.2,
            oracle_delay_blocks: 3,
            adversary: Adversary::None,
            mode: Mode::Guarded,
            settlement_lag: 1,
            window_ms: 2_000,
            block_ms: 12_000,
            users: 1_024,
            trials: 1,
            committee: CommitteeSection::default(),
            freshness: FreshnessParams::default(),
            severity: SeverityConfig::default(),
            max_retries: 3,
            oracle: OracleWalk::default(),
            mev: MevSection::default(),
            byzantine_oracle: ByzantineOracleSection::default(),
            malicious: MaliciousSection::default(),
        }
    }
}

fn fraction(name: &str, v: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{name} must lie in [0, 1], got {v}"))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn windows_per_block(&self) -> u64 {
        self.block_ms / self.window_ms
    }

    pub fn window_us(&self) -> u64 {
        self.window_ms * 1_000
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tps.is_finite() && self.tps >= 0.0) {
            return Err(format!("tps must be a non-negative number, got {}", self.tps));
        }
        if self.duration_windows == 0 {
            return Err("duration_windows must be positive".into());
        }
        fraction("dependency_intensity", self.dependency_intensity)?;
        if self.dependency_intensity > 0.4 {
            return Err(format!("dependency_intensity must not exceed 0.4, got {}", self.dependency_intensity));
        }
        if self.oracle_delay_blocks > 10 {
            return Err(format!("oracle_delay_blocks must lie in 0..=10, got {}", self.oracle_delay_blocks));
        }
        if self.settlement_lag == 0 {
            return Err("settlement_lag must be at least 1".into());
        }
        if self.window_ms == 0 || self.block_ms < self.window_ms || self.block_ms % self.window_ms != 0 {
            return Err("block_ms must be a positive multiple of window_ms".into());
        }
        if self.users < 8 {
            return Err("need at least 8 users".into());
        }
        if self.trials == 0 {
            return Err("trials must be positive".into());
        }
        let c = &self.committee;
        fraction("committee.byzantine_fraction", c.byzantine_fraction)?;
        let committee = c.to_committee();
        committee.validate()?;
        if c.assume_honest_majority && (c.byzantine_fraction > 0.49 || !committee.honest_majority()) {
            return Err(format!(
                "committee.byzantine_fraction {} breaks the honest-majority assumption (max 0.49)",
                c.byzantine_fraction
            ));
        }
        // Ordering lags collection by one window; stamps may not straddle two.
        if c.jitter_us >= self.window_us() {
            return Err("committee.jitter_us must be below the window length".into());
        }
        self.freshness.validate()?;
        self.severity.validate()?;
        self.oracle.validate()?;
        fraction("mev.swap_prob", self.mev.swap_prob)?;
        fraction("byzantine_oracle.inconsistent_prob", self.byzantine_oracle.inconsistent_prob)?;
        fraction("malicious.fraction", self.malicious.fraction)?;
        Ok(())
    }
}
