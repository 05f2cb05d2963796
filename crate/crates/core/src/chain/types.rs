//! Fixed-width identifiers shared by every layer of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use sha3::Keccak256;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {kind} literal `{input}`")]
pub struct ParseIdError {
    kind: &'static str,
    input: String,
}

fn decode_fixed<const N: usize>(kind: &'static str, s: &str) -> Result<[u8; N], ParseIdError> {
    let err = || ParseIdError {
        kind,
        input: s.to_owned(),
    };
    let digits = s.strip_prefix("0x").ok_or_else(err)?;
    let mut out = [0u8; N];
    hex::decode_to_slice(digits, &mut out).map_err(|_| err())?;
    Ok(out)
}

macro_rules! hex_newtype {
    ($(#[$meta:meta])* $name:ident, $len:expr, $kind:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{}", hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(self, f)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_newtype!(
    /// 20-byte account or contract address.
    Address,
    20,
    "address"
);
hex_newtype!(
    /// 4-byte function selector (first bytes of the Keccak-256 of the signature).
    Selector,
    4,
    "selector"
);
hex_newtype!(
    /// 32-byte storage word, used for L1 slot keys and values.
    Word,
    32,
    "word"
);
hex_newtype!(
    /// SHA-256 output.
    Digest,
    32,
    "digest"
);

pub type SlotKey = Word;
pub type SlotValue = Word;

impl Address {
    /// Deterministic address for a human-readable label; used by fixtures and
    /// the workload generator so that `alice` always maps to the same account.
    pub fn from_label(label: &str) -> Self {
        let h = sha256(label.as_bytes());
        let mut out = [0u8; 20];
        out.copy_from_slice(&h.0[12..]);
        Address(out)
    }
}

impl FromStr for Address {
    type Err = ParseIdError;

    /// Accepts `0x` followed by 40 hex digits, or a label (see [`Address::from_label`]).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.starts_with("0x") {
            decode_fixed("address", s).map(Address)
        } else if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            Ok(Address::from_label(s))
        } else {
            Err(ParseIdError {
                kind: "address",
                input: s.to_owned(),
            })
        }
    }
}

impl Selector {
    /// Selector of a canonical signature such as `transfer(address,uint256)`.
    pub fn from_signature(canonical: &str) -> Self {
        let h = Keccak256::digest(canonical.as_bytes());
        Selector([h[0], h[1], h[2], h[3]])
    }
}

impl FromStr for Selector {
    type Err = ParseIdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_fixed("selector", s).map(Selector)
    }
}

impl Word {
    pub const ZERO: Word = Word([0u8; 32]);

    /// Big-endian unsigned encoding.
    pub fn from_u128(v: u128) -> Self {
        let mut out = [0u8; 32];
        out[16..].copy_from_slice(&v.to_be_bytes());
        Word(out)
    }

    /// Big-endian unsigned interpretation; `None` if the value exceeds `u128`.
    pub fn to_u128(&self) -> Option<u128> {
        if self.0[..16].iter().any(|&b| b != 0) {
            return None;
        }
        let mut buf = [0u8; 16];
        buf.copy_from_slice(&self.0[16..]);
        Some(u128::from_be_bytes(buf))
    }

    pub fn from_address(a: Address) -> Self {
        let mut out = [0u8; 32];
        out[12..].copy_from_slice(&a.0);
        Word(out)
    }

    /// Slot key for a named storage variable (`keccak256(name)`).
    pub fn named(name: &str) -> Self {
        let h = Keccak256::digest(name.as_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&h);
        Word(out)
    }
}

impl FromStr for Word {
    type Err = ParseIdError;

    /// `0x` + 64 hex digits, or a decimal integer.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.starts_with("0x") {
            decode_fixed("word", s).map(Word)
        } else {
            s.parse::<u128>().map(Word::from_u128).map_err(|_| ParseIdError {
                kind: "word",
                input: s.to_owned(),
            })
        }
    }
}

impl FromStr for Digest {
    type Err = ParseIdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_fixed("digest", s).map(Digest)
    }
}

pub fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// A runtime value flowing through rule evaluation, tx parameters and L2 maps.
///
/// Addresses are opaque: they support only equality.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "ValueRepr", into = "ValueRepr")]
pub enum Value {
    Int(i64),
    Addr(Address),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            Value::Addr(_) => None,
        }
    }

    pub fn as_addr(&self) -> Option<Address> {
        match self {
            Value::Addr(a) => Some(*a),
            Value::Int(_) => None,
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Addr(a) => write!(f, "{a}"),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Value {
    type Err = ParseIdError;

    /// Integers parse as [`Value::Int`]; anything else must be an address.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<i64>() {
            Ok(v) => Ok(Value::Int(v)),
            Err(_) => s.parse().map(Value::Addr),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ValueRepr {
    Int(i64),
    Str(String),
}

impl TryFrom<ValueRepr> for Value {
    type Error = ParseIdError;
    fn try_from(r: ValueRepr) -> Result<Self, Self::Error> {
        match r {
            ValueRepr::Int(v) => Ok(Value::Int(v)),
            ValueRepr::Str(s) => s.parse(),
        }
    }
}

impl From<Value> for ValueRepr {
    fn from(v: Value) -> Self {
        match v {
            Value::Int(v) => ValueRepr::Int(v),
            Value::Addr(a) => ValueRepr::Str(a.to_string()),
        }
    }
}
