//! Transactions: the `(msg, sig, meta)` triple, its canonical byte encoding and
//! the simulation-grade signature scheme.
//!
//! Canonical encoding (all integers big-endian, fixed width):
//!
//! ```text
//! contract[20] selector[4] param_count:u32
//!   { name_len:u16 name[name_len] tag:u8 (0 => i64[8] | 1 => address[20]) }*
//! sig[32] arrival_ts:u64 nonce:u64 gas:u64 sender[20]
//! ```
//!
//! Parameters are emitted in ascending name order, so the encoding is unique.

use std::collections::BTreeMap;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::state::L2State;
use super::types::{sha256, Address, Digest, Selector, Value};

type HmacSha256 = Hmac<Sha256>;

const TX_MAC_DOMAIN: &[u8] = b"tollgate/tx-mac/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub contract: Address,
    pub selector: Selector,
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    /// Microseconds of simulated time; strictly positive.
    pub arrival_ts: u64,
    pub nonce: u64,
    pub gas: u64,
    pub sender: Address,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Signature(pub [u8; 32]);

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature(0x{})", hex::encode(self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub msg: Message,
    pub sig: Signature,
    pub meta: Meta,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("unexpected end of input at byte {0}")]
    Truncated(usize),
    #[error("unknown value tag {tag} at byte {at}")]
    BadTag { tag: u8, at: usize },
    #[error("parameter name is not UTF-8")]
    BadName,
    #[error("duplicate or unsorted parameter `{0}`")]
    ParamOrder(String),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

/// Per-sender secret for the keyed-hash signature scheme.
#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigningKey(pub [u8; 32]);

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SigningKey(..)")
    }
}

impl SigningKey {
    /// Deterministic key for simulated accounts.
    pub fn derive(seed: u64, owner: Address) -> Self {
        let mut buf = Vec::with_capacity(40);
        buf.extend_from_slice(b"tollgate/key");
        buf.extend_from_slice(&seed.to_be_bytes());
        buf.extend_from_slice(&owner.0);
        SigningKey(sha256(&buf).0)
    }

    pub fn mac(&self, parts: &[&[u8]]) -> [u8; 32] {
        let mut mac = HmacSha256::new_from_slice(&self.0).expect("hmac accepts any key length");
        for p in parts {
            mac.update(p);
        }
        mac.finalize().into_bytes().into()
    }

    pub fn verify(&self, parts: &[&[u8]], tag: &[u8; 32]) -> bool {
        let mut mac = HmacSha256::new_from_slice(&self.0).expect("hmac accepts any key length");
        for p in parts {
            mac.update(p);
        }
        mac.verify_slice(tag).is_ok()
    }
}

/// Public registry of sender keys. A MAC is not publicly verifiable, so the
/// registry stands in for a PKI; swapping in real signatures only touches
/// [`Transaction::sign`] and [`KeyRegistry::verify`].
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    keys: BTreeMap<Address, SigningKey>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, owner: Address, key: SigningKey) {
        self.keys.insert(owner, key);
    }

    pub fn get(&self, owner: &Address) -> Option<&SigningKey> {
        self.keys.get(owner)
    }

    pub fn verify(&self, tx: &Transaction) -> bool {
        match self.keys.get(&tx.meta.sender) {
            Some(k) => k.verify(&[TX_MAC_DOMAIN, &tx.signing_payload()], &tx.sig.0),
            None => false,
        }
    }
}

impl Message {
    pub fn new(contract: Address, selector: Selector) -> Self {
        Message {
            contract,
            selector,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, name: &str, value: Value) -> Self {
        self.params.insert(name.to_owned(), value);
        self
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.contract.0);
        out.extend_from_slice(&self.selector.0);
        out.extend_from_slice(&(self.params.len() as u32).to_be_bytes());
        for (name, value) in &self.params {
            out.extend_from_slice(&(name.len() as u16).to_be_bytes());
            out.extend_from_slice(name.as_bytes());
            match value {
                Value::Int(v) => {
                    out.push(0);
                    out.extend_from_slice(&v.to_be_bytes());
                }
                Value::Addr(a) => {
                    out.push(1);
                    out.extend_from_slice(&a.0);
                }
            }
        }
    }
}

impl Transaction {
    /// Builds and signs a transaction.
    pub fn sign(msg: Message, meta: Meta, key: &SigningKey) -> Self {
        let mut tx = Transaction {
            msg,
            sig: Signature::default(),
            meta,
        };
        tx.sig = Signature(key.mac(&[TX_MAC_DOMAIN, &tx.signing_payload()]));
        tx
    }

    /// Bytes covered by the signature: msg, sender, nonce and gas.
    fn signing_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96);
        self.msg.encode_into(&mut out);
        out.extend_from_slice(&self.meta.sender.0);
        out.extend_from_slice(&self.meta.nonce.to_be_bytes());
        out.extend_from_slice(&self.meta.gas.to_be_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128);
        self.msg.encode_into(&mut out);
        out.extend_from_slice(&self.sig.0);
        out.extend_from_slice(&self.meta.arrival_ts.to_be_bytes());
        out.extend_from_slice(&self.meta.nonce.to_be_bytes());
        out.extend_from_slice(&self.meta.gas.to_be_bytes());
        out.extend_from_slice(&self.meta.sender.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader { bytes, pos: 0 };
        let contract = Address(r.array()?);
        let selector = Selector(r.array()?);
        let count = u32::from_be_bytes(r.array()?);
        let mut params = BTreeMap::new();
        let mut last: Option<String> = None;
        for _ in 0..count {
            let len = u16::from_be_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CodecError::BadName)?
                .to_owned();
            if last.as_ref().is_some_and(|l| *l >= name) {
                return Err(CodecError::ParamOrder(name));
            }
            let at = r.pos;
            let value = match r.array::<1>()?[0] {
                0 => Value::Int(i64::from_be_bytes(r.array()?)),
                1 => Value::Addr(Address(r.array()?)),
                tag => return Err(CodecError::BadTag { tag, at }),
            };
            last = Some(name.clone());
            params.insert(name, value);
        }
        let sig = Signature(r.array()?);
        let meta = Meta {
            arrival_ts: u64::from_be_bytes(r.array()?),
            nonce: u64::from_be_bytes(r.array()?),
            gas: u64::from_be_bytes(r.array()?),
            sender: Address(r.array()?),
        };
        if r.pos != bytes.len() {
            return Err(CodecError::Trailing(bytes.len() - r.pos));
        }
        Ok(Transaction {
            msg: Message {
                contract,
                selector,
                params,
            },
            sig,
            meta,
        })
    }

    /// SHA-256 of the canonical encoding. Doubles as the tx id and as the
    /// link hash binding the plaintext and encrypted submissions.
    pub fn hash(&self) -> Digest {
        sha256(&self.encode())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).ok_or(CodecError::Truncated(self.pos))?;
        let s = self.bytes.get(self.pos..end).ok_or(CodecError::Truncated(self.pos))?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }
}

/// Syntactic legitimacy: valid signature, successor nonce, positive gas and
/// arrival time. Never errors.
pub fn syn_legit(tx: &Transaction, keys: &KeyRegistry, state: &L2State) -> bool {
    tx.meta.gas > 0
        && tx.meta.arrival_ts > 0
        && tx.meta.nonce == state.next_nonce(&tx.meta.sender)
        && keys.verify(tx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alice_tx(nonce: u64) -> (Transaction, KeyRegistry) {
        let alice = Address::from_label("alice");
        let key = SigningKey::derive(7, alice);
        let mut keys = KeyRegistry::new();
        keys.insert(alice, key);
        let msg = Message::new(
            Address::from_label("token"),
            Selector::from_signature("transfer(address,uint256)"),
        )
        .with_param("to", Value::Addr(Address::from_label("bob")))
        .with_param("amount", Value::Int(50));
        let meta = Meta {
            arrival_ts: 1,
            nonce,
            gas: 21_000,
            sender: alice,
        };
        (Transaction::sign(msg, meta, &key), keys)
    }

    #[test]
    fn well_formed_tx_is_syntactically_legit() {
        let (tx, keys) = alice_tx(0);
        assert!(syn_legit(&tx, &keys, &L2State::default()));
    }

    #[test]
    fn corrupted_signature_is_rejected() {
        let (mut tx, keys) = alice_tx(0);
        tx.sig.0[5] ^= 0x01;
        assert!(!syn_legit(&tx, &keys, &L2State::default()));
    }

    #[test]
    fn non_successor_nonce_is_rejected() {
        let (tx, keys) = alice_tx(5);
        assert!(!syn_legit(&tx, &keys, &L2State::default()));
    }

    #[test]
    fn zero_gas_or_unknown_sender_is_rejected() {
        let (tx, keys) = alice_tx(0);
        let mut zero_gas = tx.clone();
        zero_gas.meta.gas = 0;
        assert!(!syn_legit(&zero_gas, &keys, &L2State::default()));
        assert!(!syn_legit(&tx, &KeyRegistry::new(), &L2State::default()));
    }

    #[test]
    fn decode_rejects_trailing_and_truncated_input() {
        let (tx, _) = alice_tx(0);
        let mut bytes = tx.encode();
        bytes.push(0);
        assert_eq!(Transaction::decode(&bytes), Err(CodecError::Trailing(1)));
        bytes.truncate(bytes.len() - 10);
        assert!(matches!(Transaction::decode(&bytes), Err(CodecError::Truncated(_))));
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i64>().prop_map(Value::Int),
            any::<[u8; 20]>().prop_map(|a| Value::Addr(Address(a))),
        ]
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(
            params in proptest::collection::btree_map("[a-z]{1,12}", arb_value(), 0..6),
            contract in any::<[u8; 20]>(),
            sel in any::<[u8; 4]>(),
            sig in any::<[u8; 32]>(),
            ts in any::<u64>(), nonce in any::<u64>(), gas in any::<u64>(),
            sender in any::<[u8; 20]>(),
        ) {
            let tx = Transaction {
                msg: Message { contract: Address(contract), selector: Selector(sel), params },
                sig: Signature(sig),
                meta: Meta { arrival_ts: ts, nonce, gas, sender: Address(sender) },
            };
            prop_assert_eq!(Transaction::decode(&tx.encode()).unwrap(), tx);
        }
    }
}
