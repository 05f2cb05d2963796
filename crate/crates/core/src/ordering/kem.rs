//! Threshold hashed-ElGamal key encapsulation.
//!
//! A 32-byte key k is wrapped as `c1 = g^r`, `c2 = k XOR H(pk^r, c1)`. Member i
//! holding share x_i publishes `D_i = c1^{x_i}`; any t of them combine by
//! Lagrange interpolation in the exponent to `c1^x = pk^r`.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::group::Group;
use super::shamir::{lagrange_at_zero, ShamirError};

const MASK_DOMAIN: &[u8] = b"tollgate/kem-mask/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KemCiphertext {
    #[serde(with = "hex::serde")]
    pub c1: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub c2: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialDecryption {
    pub index: u32,
    #[serde(with = "hex::serde")]
    pub d: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KemError {
    #[error("malformed group element")]
    BadElement,
    #[error(transparent)]
    Shares(#[from] ShamirError),
}

fn mask<G: Group>(g: &G, shared: &G::Element, c1: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(MASK_DOMAIN);
    h.update(g.encode(shared));
    h.update(c1);
    h.finalize().into()
}

fn xor(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
    core::array::from_fn(|i| a[i] ^ b[i])
}

pub fn encapsulate<G: Group, R: RngCore + ?Sized>(g: &G, pk: &G::Element, key: &[u8; 32], rng: &mut R) -> KemCiphertext {
    let mut r = g.random_scalar(rng);
    while r == g.scalar(0) {
        r = g.random_scalar(rng);
    }
    let c1 = g.encode(&g.pow(&g.generator(), &r));
    let c2 = xor(key, &mask(g, &g.pow(pk, &r), &c1));
    KemCiphertext { c1, c2 }
}

pub fn partial_decrypt<G: Group>(g: &G, index: u32, share: &G::Scalar, ct: &KemCiphertext) -> Result<PartialDecryption, KemError> {
    let c1 = g.decode(&ct.c1).ok_or(KemError::BadElement)?;
    Ok(PartialDecryption {
        index,
        d: g.encode(&g.pow(&c1, share)),
    })
}

/// Recovers k from partials. The caller enforces the threshold; with
/// fewer than t partials the result is an unrelated key.
pub fn combine<G: Group>(g: &G, partials: &[PartialDecryption], ct: &KemCiphertext) -> Result<[u8; 32], KemError> {
    let idx: Vec<u32> = partials.iter().map(|p| p.index).collect();
    let lambdas = lagrange_at_zero(g, &idx)?;
    let mut shared = g.identity();
    for (p, l) in partials.iter().zip(&lambdas) {
        let d = g.decode(&p.d).ok_or(KemError::BadElement)?;
        shared = g.op(&shared, &g.pow(&d, l));
    }
    Ok(xor(&ct.c2, &mask(g, &shared, &ct.c1)))
}

/// Single-key decapsulation, for tests and the degenerate n = 1 committee.
pub fn decapsulate<G: Group>(g: &G, sk: &G::Scalar, ct: &KemCiphertext) -> Result<[u8; 32], KemError> {
    let c1 = g.decode(&ct.c1).ok_or(KemError::BadElement)?;
    Ok(xor(&ct.c2, &mask(g, &g.pow(&c1, sk), &ct.c1)))
}
