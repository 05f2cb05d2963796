//! Arrival ordering, the binding commitment, release verification and
//! slashing evidence.
//!
//! Ordered lists are encoded as `count:u32 { len:u32 item[len] }*` with each
//! item the canonical encoding of one element. `comm` is SHA-256 of that.

use serde::{Deserialize, Serialize};

use crate::chain::{sha256, CodecError, Digest, Transaction};

use super::envelope::EncryptedTx;

/// Sort key: committee arrival time, ties broken by H(ct_sym).
pub fn ordering_key(e: &EncryptedTx) -> (u64, Digest) {
    (e.arrival_ts, e.ct_hash())
}

/// Sorts a window's submissions. Looks only at metadata and ciphertext bytes.
pub fn order_window(mut txs: Vec<EncryptedTx>) -> Vec<EncryptedTx> {
    txs.sort_by_cached_key(ordering_key);
    txs
}

pub fn encode_list<T: AsRef<[u8]>>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + items.iter().map(|i| i.as_ref().len() + 4).sum::<usize>());
    out.extend_from_slice(&(items.len() as u32).to_be_bytes());
    for it in items {
        out.extend_from_slice(&(it.as_ref().len() as u32).to_be_bytes());
        out.extend_from_slice(it.as_ref());
    }
    out
}

pub fn decode_list(bytes: &[u8]) -> Result<Vec<Vec<u8>>, CodecError> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], CodecError> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or(CodecError::Truncated(pos))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let count = u32::from_be_bytes(take(4)?.try_into().expect("4 bytes"));
    let mut items = Vec::new();
    for _ in 0..count {
        let len = u32::from_be_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        items.push(take(len)?.to_vec());
    }
    match bytes.len() - pos {
        0 => Ok(items),
        n => Err(CodecError::Trailing(n)),
    }
}

pub fn canonical(o: &[EncryptedTx]) -> Vec<u8> {
    let items: Vec<Vec<u8>> = o.iter().map(EncryptedTx::encode).collect();
    encode_list(&items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingCommitment {
    pub window_id: u64,
    pub comm: Digest,
    /// Simulated microseconds.
    pub published_at: u64,
}

pub fn commit_order(window_id: u64, o: &[EncryptedTx], published_at: u64) -> OrderingCommitment {
    OrderingCommitment {
        window_id,
        comm: sha256(&canonical(o)),
        published_at,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    /// The committed list itself is not in arrival order.
    UnsortedCommitment,
    /// The released encrypted ordering differs from the committed one.
    ReleasedCiphertextMismatch,
    /// A released plaintext does not hash to the committed link hash at its position.
    PlaintextMismatch,
}

/// Self-contained proof of a deviation from a published commitment.
///
/// `preimage` is the committed list encoding (it must hash to `comm`);
/// `observed` is the released list: encrypted items for
/// `ReleasedCiphertextMismatch`, plaintext transactions for
/// `PlaintextMismatch`, empty for `UnsortedCommitment`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlashingEvidence {
    pub window_id: u64,
    pub comm: Digest,
    #[serde(with = "hex::serde")]
    pub preimage: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub observed: Vec<u8>,
    pub index: u64,
    pub kind: EvidenceKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verification {
    Released(Vec<Transaction>),
    Slashed(Box<SlashingEvidence>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvidenceError {
    #[error("preimage does not hash to the committed value")]
    CommMismatch,
    #[error("malformed list: {0}")]
    Malformed(String),
    #[error("no deviation at the claimed index {claimed} (first deviation: {actual:?})")]
    WrongIndex { claimed: u64, actual: Option<u64> },
}

fn first_unsorted(o: &[EncryptedTx]) -> Option<usize> {
    let keys: Vec<_> = o.iter().map(ordering_key).collect();
    keys.windows(2).position(|w| w[0] > w[1])
}

fn first_divergence<A, B>(a: &[A], b: &[B], same: impl Fn(&A, &B) -> bool) -> Option<usize> {
    let common = a.len().min(b.len());
    (0..common)
        .find(|&i| !same(&a[i], &b[i]))
        .or((a.len() != b.len()).then_some(common))
}

/// Checks a release against the committed list the committee holds.
///
/// `committed` must be the preimage of `c.comm` (the committee refuses to
/// decrypt otherwise); this is a caller invariant and is asserted.
pub fn verify_and_release(
    c: &OrderingCommitment,
    committed: &[EncryptedTx],
    released_enc: &[EncryptedTx],
    released_plain: &[Transaction],
) -> Verification {
    let preimage = canonical(committed);
    assert_eq!(sha256(&preimage), c.comm, "committed list is not the commitment preimage");
    let evidence = |kind, index: usize, observed: Vec<u8>| {
        Verification::Slashed(Box::new(SlashingEvidence {
            window_id: c.window_id,
            comm: c.comm,
            preimage: preimage.clone(),
            observed,
            index: index as u64,
            kind,
        }))
    };
    if let Some(i) = first_unsorted(committed) {
        return evidence(EvidenceKind::UnsortedCommitment, i, encode_list::<Vec<u8>>(&[]));
    }
    if let Some(i) = first_divergence(committed, released_enc, |a, b| a == b) {
        return evidence(EvidenceKind::ReleasedCiphertextMismatch, i, canonical(released_enc));
    }
    if let Some(i) = first_divergence(committed, released_plain, |e, tx| tx.hash() == e.link_hash) {
        let items: Vec<Vec<u8>> = released_plain.iter().map(Transaction::encode).collect();
        return evidence(EvidenceKind::PlaintextMismatch, i, encode_list(&items));
    }
    Verification::Released(released_plain.to_vec())
}

/// Offline check of evidence: the preimage must open `comm` and the claimed
/// index must be the first deviation of the stated kind.
pub fn verify_evidence(ev: &SlashingEvidence) -> Result<(), EvidenceError> {
    if sha256(&ev.preimage) != ev.comm {
        return Err(EvidenceError::CommMismatch);
    }
    let malformed = |e: CodecError| EvidenceError::Malformed(e.to_string());
    let committed_raw = decode_list(&ev.preimage).map_err(malformed)?;
    let committed = committed_raw
        .iter()
        .map(|b| EncryptedTx::decode(b))
        .collect::<Result<Vec<_>, _>>()
        .map_err(malformed)?;
    let observed = decode_list(&ev.observed).map_err(malformed)?;
    let actual = match ev.kind {
        EvidenceKind::UnsortedCommitment => first_unsorted(&committed),
        EvidenceKind::ReleasedCiphertextMismatch => first_divergence(&committed_raw, &observed, |a, b| a == b),
        EvidenceKind::PlaintextMismatch => {
            first_divergence(&committed, &observed, |e, raw| sha256(raw) == e.link_hash)
        }
    };
    match actual {
        Some(i) if i as u64 == ev.index => Ok(()),
        other => Err(EvidenceError::WrongIndex {
            claimed: ev.index,
            actual: other.map(|i| i as u64),
        }),
    }
}

/// Append-only public log of commitments with non-decreasing timestamps.
#[derive(Debug, Clone, Default)]
pub struct PublicLog {
    entries: Vec<OrderingCommitment>,
}

impl PublicLog {
    pub fn publish(&mut self, c: OrderingCommitment) -> Result<(), String> {
        if let Some(last) = self.entries.last() {
            if c.published_at < last.published_at {
                return Err(format!(
                    "commitment for window {} at {} precedes the log head {}",
                    c.window_id, c.published_at, last.published_at
                ));
            }
        }
        if self.get(c.window_id).is_some() {
            return Err(format!("window {} already committed", c.window_id));
        }
        self.entries.push(c);
        Ok(())
    }

    pub fn get(&self, window_id: u64) -> Option<&OrderingCommitment> {
        self.entries.iter().rev().find(|c| c.window_id == window_id)
    }

    pub fn entries(&self) -> &[OrderingCommitment] {
        &self.entries
    }
}
