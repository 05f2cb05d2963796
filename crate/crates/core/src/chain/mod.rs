//! The two-layer system model: transactions, L2 and L1 state, the L2
//! transition and the settlement check.

mod exec;
mod state;
mod tx;
mod types;

pub use exec::{
    apply_l2, settle_l1, DependencyRead, ExecError, Function, L1Dependency, RecordingView, Settlement,
    COLLATERAL_MAP, PRICE_SCALE,
};
pub use state::{
    advance_l1, L1Bindings, L1State, L1View, L2State, SlotWrite, BALANCE_MAP, VOLUME_MAP, VOLUME_WINDOW_US,
};
pub use tx::{syn_legit, CodecError, KeyRegistry, Message, Meta, Signature, SigningKey, Transaction};
pub use types::{sha256, Address, Digest, ParseIdError, Selector, SlotKey, SlotValue, Value, Word};
