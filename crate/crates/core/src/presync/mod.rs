//! Pre-synchronization validator: L1 cache, sandboxed execution with
//! dependency tracking, difference sets and the accept/delay/reject decision.

mod cache;
mod diff;
mod failrate;
mod oracle;
mod validator;

pub use cache::{CacheEntry, CacheReader, CacheStats, L1Cache, DEFAULT_CAPACITY};
pub use diff::{
    compute_diff, decide, drift_bps, sandbox_execute, Decision, DiffEntry, SandboxResult, SandboxTx, SeverityConfig,
    SlotClass, Verdict,
};
pub use failrate::{estimate_fail_rate, FailRateConfig, FailRateEstimate};
pub use oracle::{oracle_slot, OracleChain, OracleWalk, SettlementQueue};
pub use validator::{
    accepted_ids, screen_batch, validate_state, EpsilonModel, FaultInjector, FreshnessParams, L1Sources, NoFaults,
    PresyncConfig, RandomFaults, Screening, StateCheck, StateReject,
};
