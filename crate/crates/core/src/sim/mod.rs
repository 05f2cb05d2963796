//! Scenario harness: workloads, adversaries, the end-to-end pipeline and
//! Monte Carlo aggregation.

mod adversary;
mod config;
mod events;
mod metrics;
mod montecarlo;
pub mod profiles;
mod scenario;
mod workload;

pub use adversary::{mev_adversary, post_commit_swap, ByzantineFeed};
pub use config::{
    Adversary, ByzantineOracleSection, CommitteeSection, GroupChoice, MaliciousSection, MevMode, MevSection, Mode,
    RuleProfile, ScenarioConfig,
};
pub use events::{audit_stage_order, parse_jsonl, Event, EventSink, JsonlSink, NullSink, Stage};
pub use metrics::{Costs, Counts, FairnessStats, InjectionStats, Metrics, SettlementStats, SlashingStats};
pub use montecarlo::{monte_carlo, run_trials, summarize, sweep, trial_seed, with_override, MonteCarlo, Summary, SweepPoint};
pub use scenario::{run_scenario, run_scenario_rules, run_scenario_with, ScenarioOutcome};
pub use workload::{Arrival, Injection, TxClass, Workload};
