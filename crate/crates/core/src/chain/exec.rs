//! Deterministic L2 execution and the settlement-time consistency check.
//!
//! Contract logic is a fixed family of handlers selected by function selector.
//! Every L1 read goes through a recording view, so the dependency list of a
//! transaction is exactly the set of slots it observed.

use std::cell::RefCell;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::state::{L1View, L2State};
use super::tx::Transaction;
use super::types::{Address, Digest, Selector, SlotKey, SlotValue, Value, Word};

/// Fixed-point scale of the oracle price: `1000` means 1.0.
pub const PRICE_SCALE: i128 = 1000;
/// Map credited by redemptions and swaps.
pub const COLLATERAL_MAP: &str = "Collateral";

pub const TRANSFER_SIG: &str = "transfer(address,uint256)";
pub const BRIDGE_MINT_SIG: &str = "bridgeMint(address,uint256)";
pub const REDEEM_SIG: &str = "redeem(uint256)";
pub const SWAP_SIG: &str = "swap(uint256,uint256)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Function {
    Transfer,
    BridgeMint,
    Redeem,
    Swap,
}

impl Function {
    pub const ALL: [Function; 4] = [
        Function::Transfer,
        Function::BridgeMint,
        Function::Redeem,
        Function::Swap,
    ];

    pub fn signature(self) -> &'static str {
        match self {
            Function::Transfer => TRANSFER_SIG,
            Function::BridgeMint => BRIDGE_MINT_SIG,
            Function::Redeem => REDEEM_SIG,
            Function::Swap => SWAP_SIG,
        }
    }

    pub fn selector(self) -> Selector {
        static SELECTORS: OnceLock<[Selector; 4]> = OnceLock::new();
        let all = SELECTORS.get_or_init(|| Function::ALL.map(|f| Selector::from_signature(f.signature())));
        all[self as usize]
    }

    pub fn from_selector(sel: Selector) -> Option<Function> {
        Function::ALL.into_iter().find(|f| f.selector() == sel)
    }

    /// Whether execution reads L1 state through the price feed.
    pub fn reads_l1(self) -> bool {
        !matches!(self, Function::Transfer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DependencyRead {
    pub contract: Address,
    pub key: SlotKey,
    pub value: SlotValue,
}

/// The L1 snapshot a transaction assumed during L2 execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct L1Dependency {
    pub tx_id: Digest,
    pub required: Vec<DependencyRead>,
}

impl L1Dependency {
    pub fn is_empty(&self) -> bool {
        self.required.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecError {
    #[error("insufficient funds: balance {balance}, needed {needed}")]
    InsufficientFunds { balance: i64, needed: i64 },
    #[error("revert: {0}")]
    Revert(String),
    #[error("arithmetic overflow")]
    Overflow,
}

impl ExecError {
    pub fn code(&self) -> &'static str {
        match self {
            ExecError::InsufficientFunds { .. } => "insufficient-funds",
            ExecError::Revert(_) => "revert",
            ExecError::Overflow => "overflow",
        }
    }
}

/// Wraps an [`L1View`] and records the first value seen for each slot, in
/// read order.
pub struct RecordingView<'a, V: L1View + ?Sized> {
    inner: &'a V,
    trace: RefCell<Vec<DependencyRead>>,
}

impl<'a, V: L1View + ?Sized> RecordingView<'a, V> {
    pub fn new(inner: &'a V) -> Self {
        RecordingView {
            inner,
            trace: RefCell::new(Vec::new()),
        }
    }

    pub fn into_trace(self) -> Vec<DependencyRead> {
        self.trace.into_inner()
    }
}

impl<V: L1View + ?Sized> L1View for RecordingView<'_, V> {
    fn read(&self, contract: &Address, key: &SlotKey) -> SlotValue {
        let value = self.inner.read(contract, key);
        let mut trace = self.trace.borrow_mut();
        if !trace.iter().any(|r| r.contract == *contract && r.key == *key) {
            trace.push(DependencyRead {
                contract: *contract,
                key: *key,
                value,
            });
        }
        value
    }
}

fn int_param(tx: &Transaction, name: &str) -> Result<i64, ExecError> {
    match tx.msg.params.get(name) {
        Some(Value::Int(v)) => Ok(*v),
        _ => Err(ExecError::Revert(format!("bad parameter `{name}`"))),
    }
}

fn addr_param(tx: &Transaction, name: &str) -> Result<Address, ExecError> {
    match tx.msg.params.get(name) {
        Some(Value::Addr(a)) => Ok(*a),
        _ => Err(ExecError::Revert(format!("bad parameter `{name}`"))),
    }
}

fn positive_amount(tx: &Transaction) -> Result<i64, ExecError> {
    let amount = int_param(tx, "amount")?;
    if amount <= 0 {
        return Err(ExecError::Revert("non-positive amount".into()));
    }
    Ok(amount)
}

fn read_price(state: &L2State, view: &dyn L1View) -> Result<i128, ExecError> {
    let (feed, key) = state
        .bindings
        .price_feed
        .ok_or_else(|| ExecError::Revert("no price feed bound".into()))?;
    let price = view.read(&feed, &key).to_u128().ok_or(ExecError::Overflow)?;
    if price == 0 {
        return Err(ExecError::Revert("zero oracle price".into()));
    }
    i128::try_from(price).map_err(|_| ExecError::Overflow)
}

fn convert(amount: i64, price: i128) -> Result<i64, ExecError> {
    let out = (amount as i128)
        .checked_mul(price)
        .ok_or(ExecError::Overflow)?
        / PRICE_SCALE;
    i64::try_from(out).map_err(|_| ExecError::Overflow)
}

fn debit(state: &L2State, who: Address, amount: i64) -> Result<i64, ExecError> {
    let balance = state.balance(&who);
    if balance < amount {
        return Err(ExecError::InsufficientFunds {
            balance,
            needed: amount,
        });
    }
    Ok(balance - amount)
}

fn credit_collateral(state: &mut L2State, who: Address, amount: i64) -> Result<(), ExecError> {
    let key = Value::Addr(who);
    let cur = state
        .lookup(COLLATERAL_MAP, &key)
        .and_then(|v| v.as_int())
        .unwrap_or(0);
    let next = cur.checked_add(amount).ok_or(ExecError::Overflow)?;
    state.set(COLLATERAL_MAP, key, Value::Int(next));
    Ok(())
}

/// Runs one handler on `state`. All checks precede all writes, so an error
/// leaves `state` untouched.
fn dispatch(tx: &Transaction, state: &mut L2State, view: &dyn L1View) -> Result<(), ExecError> {
    let sender = tx.meta.sender;
    if tx.meta.nonce != state.next_nonce(&sender) {
        return Err(ExecError::Revert(format!("nonce {} is not the successor", tx.meta.nonce)));
    }
    let function = Function::from_selector(tx.msg.selector)
        .ok_or_else(|| ExecError::Revert(format!("unknown selector {}", tx.msg.selector)))?;
    match function {
        Function::Transfer => {
            let to = addr_param(tx, "to")?;
            let amount = positive_amount(tx)?;
            let from_after = debit(state, sender, amount)?;
            let to_after = if to != sender {
                Some(state.balance(&to).checked_add(amount).ok_or(ExecError::Overflow)?)
            } else {
                None
            };
            // Post-hook first: it is the only remaining fallible step.
            state
                .record_volume(sender, tx.meta.arrival_ts, amount)
                .ok_or(ExecError::Overflow)?;
            if let Some(to_after) = to_after {
                state.balances.insert(to, to_after);
                state.balances.insert(sender, from_after);
            }
        }
        Function::BridgeMint => {
            let to = addr_param(tx, "to")?;
            let amount = positive_amount(tx)?;
            let price = read_price(state, view)?;
            if let Some(registry) = state.bindings.kyc_registry {
                if view.read(&registry, &Word::from_address(to)) == Word::ZERO {
                    return Err(ExecError::Revert("recipient not eligible on L1".into()));
                }
            }
            let minted = convert(amount, price)?;
            let to_after = state.balance(&to).checked_add(minted).ok_or(ExecError::Overflow)?;
            state.balances.insert(to, to_after);
        }
        Function::Redeem => {
            let amount = positive_amount(tx)?;
            let price = read_price(state, view)?;
            let payout = convert(amount, price)?;
            let from_after = debit(state, sender, amount)?;
            credit_collateral(state, sender, payout)?;
            state.balances.insert(sender, from_after);
        }
        Function::Swap => {
            let amount = positive_amount(tx)?;
            let min_out = int_param(tx, "minOut")?;
            let price = read_price(state, view)?;
            let out = convert(amount, price)?;
            if out < min_out {
                return Err(ExecError::Revert(format!("slippage: {out} < {min_out}")));
            }
            let from_after = debit(state, sender, amount)?;
            credit_collateral(state, sender, out)?;
            state.balances.insert(sender, from_after);
        }
    }
    let next = state.next_nonce(&sender) + 1;
    state.nonces.insert(sender, next);
    Ok(())
}

impl L2State {
    /// Applies `tx` in place. Handlers validate before writing, so on error
    /// the state is unchanged.
    pub fn apply(&mut self, tx: &Transaction, l1_view: &dyn L1View) -> Result<L1Dependency, ExecError> {
        let recorder = RecordingView::new(l1_view);
        dispatch(tx, self, &recorder)?;
        Ok(L1Dependency {
            tx_id: tx.hash(),
            required: recorder.into_trace(),
        })
    }
}

/// The deterministic L2 transition: new state plus the L1 reads performed.
pub fn apply_l2(
    tx: &Transaction,
    state: &L2State,
    l1_view: &dyn L1View,
) -> Result<(L2State, L1Dependency), ExecError> {
    let mut next = state.clone();
    let dep = next.apply(tx, l1_view)?;
    Ok((next, dep))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Settlement {
    Settled,
    /// Some slot the execution assumed differs from L1 at settlement.
    Conflict { mismatches: Vec<(DependencyRead, SlotValue)> },
}

impl Settlement {
    pub fn is_settled(&self) -> bool {
        matches!(self, Settlement::Settled)
    }
}

/// Settlement check: succeeds iff every assumed slot still holds the assumed
/// value in `l1` (exact equality per slot).
pub fn settle_l1(dep: &L1Dependency, l1: &dyn L1View) -> Settlement {
    let mismatches: Vec<_> = dep
        .required
        .iter()
        .filter_map(|r| {
            let actual = l1.read(&r.contract, &r.key);
            (actual != r.value).then_some((*r, actual))
        })
        .collect();
    if mismatches.is_empty() {
        Settlement::Settled
    } else {
        Settlement::Conflict { mismatches }
    }
}
