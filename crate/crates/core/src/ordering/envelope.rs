//! Hybrid-encrypted submissions.
//!
//! Canonical encoding of an [`EncryptedTx`] (integers big-endian):
//!
//! ```text
//! ct_sym_len:u32 ct_sym  c1_len:u32 c1  c2[32]  arrival_ts:u64  sender[20]  sig[32]  link_hash[32]
//! ```

use rand::RngCore;

use crate::chain::{sha256, Address, CodecError, Digest, KeyRegistry, Signature, SigningKey, Transaction};

use super::aead;
use super::group::Group;
use super::kem::{self, KemCiphertext, KemError, PartialDecryption};

const SUBMIT_DOMAIN: &[u8] = b"tollgate/encrypted-submit/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedTx {
    pub ct_sym: Vec<u8>,
    pub ct_k: KemCiphertext,
    /// Committee-assigned; zero until stamped.
    pub arrival_ts: u64,
    pub sender: Address,
    /// Submitter's signature over `(ct_sym, ct_k)`.
    pub sig: Signature,
    pub link_hash: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecryptError {
    #[error("threshold unmet: {have} of {need} partial decryptions")]
    ThresholdUnmet { have: usize, need: usize },
    #[error("symmetric ciphertext failed authentication")]
    AuthFailure,
    #[error("decrypted transaction does not match its link hash")]
    LinkMismatch,
    #[error("malformed ciphertext: {0}")]
    Malformed(String),
}

impl From<KemError> for DecryptError {
    fn from(e: KemError) -> Self {
        DecryptError::Malformed(e.to_string())
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_be_bytes());
    out.extend_from_slice(b);
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
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn prefixed(&mut self) -> Result<&'a [u8], CodecError> {
        let len = u32::from_be_bytes(self.array()?) as usize;
        self.take(len)
    }

    fn finish(&self) -> Result<(), CodecError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

impl EncryptedTx {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.ct_sym.len() + self.ct_k.c1.len() + 132);
        put_bytes(&mut out, &self.ct_sym);
        put_bytes(&mut out, &self.ct_k.c1);
        out.extend_from_slice(&self.ct_k.c2);
        out.extend_from_slice(&self.arrival_ts.to_be_bytes());
        out.extend_from_slice(&self.sender.0);
        out.extend_from_slice(&self.sig.0);
        out.extend_from_slice(&self.link_hash.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader { bytes, pos: 0 };
        let ct_sym = r.prefixed()?.to_vec();
        let c1 = r.prefixed()?.to_vec();
        let e = EncryptedTx {
            ct_sym,
            ct_k: KemCiphertext { c1, c2: r.array()? },
            arrival_ts: u64::from_be_bytes(r.array()?),
            sender: Address(r.array()?),
            sig: Signature(r.array()?),
            link_hash: Digest(r.array()?),
        };
        r.finish()?;
        Ok(e)
    }

    /// H(ct_sym): the content-blind tie-breaker.
    pub fn ct_hash(&self) -> Digest {
        sha256(&self.ct_sym)
    }

    fn signed_parts(&self) -> [&[u8]; 5] {
        [SUBMIT_DOMAIN, &self.sender.0, &self.ct_sym, &self.ct_k.c1, &self.ct_k.c2]
    }

    pub fn verify_sig(&self, keys: &KeyRegistry) -> bool {
        keys.get(&self.sender)
            .is_some_and(|k| k.verify(&self.signed_parts(), &self.sig.0))
    }
}

/// Encrypts `tx` under a fresh symmetric key, wraps the key for the
/// committee, and signs the pair with the sender's key.
pub fn encrypt_tx<G: Group, R: RngCore + ?Sized>(
    g: &G,
    tx: &Transaction,
    pk_temp: &G::Element,
    key: &SigningKey,
    rng: &mut R,
) -> EncryptedTx {
    let mut k = [0u8; 32];
    rng.fill_bytes(&mut k);
    let mut e = EncryptedTx {
        ct_sym: aead::seal(&k, &tx.encode(), rng),
        ct_k: kem::encapsulate(g, pk_temp, &k, rng),
        arrival_ts: 0,
        sender: tx.meta.sender,
        sig: Signature::default(),
        link_hash: tx.hash(),
    };
    e.sig = Signature(key.mac(&e.signed_parts()));
    e
}

/// Combines `t` or more partials, decrypts and checks the link hash.
pub fn threshold_decrypt<G: Group>(
    g: &G,
    t: u32,
    partials: &[PartialDecryption],
    e: &EncryptedTx,
) -> Result<Transaction, DecryptError> {
    let mut distinct: Vec<PartialDecryption> = Vec::with_capacity(t as usize);
    for p in partials {
        if !distinct.iter().any(|d| d.index == p.index) {
            distinct.push(p.clone());
        }
    }
    if distinct.len() < t as usize {
        return Err(DecryptError::ThresholdUnmet {
            have: distinct.len(),
            need: t as usize,
        });
    }
    distinct.truncate(t as usize);
    let k = kem::combine(g, &distinct, &e.ct_k)?;
    let plain = aead::open(&k, &e.ct_sym).map_err(|_| DecryptError::AuthFailure)?;
    if sha256(&plain) != e.link_hash {
        return Err(DecryptError::LinkMismatch);
    }
    Transaction::decode(&plain).map_err(|err| DecryptError::Malformed(err.to_string()))
}
