//! Prime-order groups for the threshold scheme.
//!
//! [`SchnorrGroup`] is the quadratic-residue subgroup of Z_p^* for a safe
//! prime p = 2q + 1, small enough for exhaustive tests. [`Secp256k1`] is the
//! production profile.

use std::fmt;

use k256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use k256::elliptic_curve::{Field, Group as _};
use k256::{AffinePoint, EncodedPoint, ProjectivePoint, Scalar};
use rand::{Rng, RngCore};

pub trait Group: Clone + fmt::Debug + Send + Sync {
    type Scalar: Copy + PartialEq + fmt::Debug + Send + Sync;
    type Element: Copy + PartialEq + fmt::Debug + Send + Sync;

    fn name(&self) -> String;
    /// Bit length of the group order (the security parameter of the sharing).
    fn order_bits(&self) -> u32;
    fn generator(&self) -> Self::Element;
    fn identity(&self) -> Self::Element;
    /// The group operation.
    fn op(&self, a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn pow(&self, base: &Self::Element, e: &Self::Scalar) -> Self::Element;
    fn encode(&self, e: &Self::Element) -> Vec<u8>;
    /// Rejects encodings of anything outside the prime-order group.
    fn decode(&self, bytes: &[u8]) -> Option<Self::Element>;

    fn scalar(&self, v: u64) -> Self::Scalar;
    fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Self::Scalar;
    fn s_add(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn s_sub(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn s_mul(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn s_inv(&self, a: &Self::Scalar) -> Option<Self::Scalar>;
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; these bases are exact for all u64.
pub fn is_prime_u64(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SchnorrGroup {
    p: u64,
    q: u64,
    g: u64,
}

impl fmt::Debug for SchnorrGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SchnorrGroup(p={}, q={}, g={})", self.p, self.q, self.g)
    }
}

impl SchnorrGroup {
    /// p = 2q + 1 with both prime, and g a generator of the order-q subgroup.
    pub fn new(p: u64, q: u64, g: u64) -> Result<Self, String> {
        if q.checked_mul(2).and_then(|v| v.checked_add(1)) != Some(p) {
            return Err(format!("p={p} is not 2q+1 for q={q}"));
        }
        if !is_prime_u64(p) || !is_prime_u64(q) {
            return Err(format!("p={p} and q={q} must both be prime"));
        }
        if g <= 1 || g >= p || pow_mod(g, q, p) != 1 {
            return Err(format!("g={g} does not generate the order-{q} subgroup"));
        }
        Ok(SchnorrGroup { p, q, g })
    }

    /// 8-bit order. Small enough to enumerate every polynomial.
    pub fn tiny() -> Self {
        SchnorrGroup::new(503, 251, 4).expect("valid parameters")
    }

    /// 15-bit order.
    pub fn toy() -> Self {
        SchnorrGroup::new(65_267, 32_633, 4).expect("valid parameters")
    }

    /// 63-bit order. Fast, but not secure.
    pub fn sim64() -> Self {
        SchnorrGroup::new(18_446_744_073_709_550_147, 9_223_372_036_854_775_073, 4).expect("valid parameters")
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn order(&self) -> u64 {
        self.q
    }
}

impl Group for SchnorrGroup {
    type Scalar = u64;
    type Element = u64;

    fn name(&self) -> String {
        format!("schnorr-{}", self.order_bits())
    }

    fn order_bits(&self) -> u32 {
        64 - self.q.leading_zeros()
    }

    fn generator(&self) -> u64 {
        self.g
    }

    fn identity(&self) -> u64 {
        1
    }

    fn op(&self, a: &u64, b: &u64) -> u64 {
        mul_mod(*a, *b, self.p)
    }

    fn pow(&self, base: &u64, e: &u64) -> u64 {
        pow_mod(*base, *e, self.p)
    }

    fn encode(&self, e: &u64) -> Vec<u8> {
        e.to_be_bytes().to_vec()
    }

    fn decode(&self, bytes: &[u8]) -> Option<u64> {
        let v = u64::from_be_bytes(bytes.try_into().ok()?);
        (v >= 1 && v < self.p && pow_mod(v, self.q, self.p) == 1).then_some(v)
    }

    fn scalar(&self, v: u64) -> u64 {
        v % self.q
    }

    fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.q)
    }

    fn s_add(&self, a: &u64, b: &u64) -> u64 {
        ((*a as u128 + *b as u128) % self.q as u128) as u64
    }

    fn s_sub(&self, a: &u64, b: &u64) -> u64 {
        ((*a as u128 + self.q as u128 - *b as u128) % self.q as u128) as u64
    }

    fn s_mul(&self, a: &u64, b: &u64) -> u64 {
        mul_mod(*a, *b, self.q)
    }

    fn s_inv(&self, a: &u64) -> Option<u64> {
        // q is prime: a^(q-2) is the inverse.
        (*a % self.q != 0).then(|| pow_mod(*a, self.q - 2, self.q))
    }
}

/// secp256k1 via `k256`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Secp256k1;

impl Group for Secp256k1 {
    type Scalar = Scalar;
    type Element = ProjectivePoint;

    fn name(&self) -> String {
        "secp256k1".into()
    }

    fn order_bits(&self) -> u32 {
        256
    }

    fn generator(&self) -> ProjectivePoint {
        ProjectivePoint::GENERATOR
    }

    fn identity(&self) -> ProjectivePoint {
        ProjectivePoint::IDENTITY
    }

    fn op(&self, a: &ProjectivePoint, b: &ProjectivePoint) -> ProjectivePoint {
        a + b
    }

    fn pow(&self, base: &ProjectivePoint, e: &Scalar) -> ProjectivePoint {
        base * e
    }

    fn encode(&self, e: &ProjectivePoint) -> Vec<u8> {
        e.to_affine().to_encoded_point(true).as_bytes().to_vec()
    }

    fn decode(&self, bytes: &[u8]) -> Option<ProjectivePoint> {
        let ep = EncodedPoint::from_bytes(bytes).ok()?;
        let p: Option<AffinePoint> = AffinePoint::from_encoded_point(&ep).into();
        p.map(ProjectivePoint::from).filter(|p| !bool::from(p.is_identity()))
    }

    fn scalar(&self, v: u64) -> Scalar {
        Scalar::from(v)
    }

    fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        Scalar::random(&mut *rng)
    }

    fn s_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a + b
    }

    fn s_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a - b
    }

    fn s_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a * b
    }

    fn s_inv(&self, a: &Scalar) -> Option<Scalar> {
        a.invert().into()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn primality_agrees_with_trial_division() {
        let trial = |n: u64| n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0);
        for n in 0..5000 {
            assert_eq!(is_prime_u64(n), trial(n), "n={n}");
        }
        // Strong pseudoprime to several small bases.
        assert!(!is_prime_u64(3_215_031_751));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SchnorrGroup::new(23, 11, 4).is_ok());
        assert!(SchnorrGroup::new(23, 11, 5).is_err()); // 5 is a non-residue mod 23
        assert!(SchnorrGroup::new(25, 12, 4).is_err());
        assert!(SchnorrGroup::new(23, 10, 4).is_err());
    }

    fn laws<G: Group>(g: &G) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = g.random_scalar(&mut rng);
            let b = g.random_scalar(&mut rng);
            let ga = g.pow(&g.generator(), &a);
            let gb = g.pow(&g.generator(), &b);
            assert_eq!(g.op(&ga, &gb), g.pow(&g.generator(), &g.s_add(&a, &b)));
            assert_eq!(g.pow(&ga, &b), g.pow(&gb, &a));
            assert_eq!(g.s_add(&g.s_sub(&a, &b), &b), a);
            if let Some(inv) = g.s_inv(&a) {
                assert_eq!(g.s_mul(&a, &inv), g.scalar(1));
            }
            if ga != g.identity() {
                assert_eq!(g.decode(&g.encode(&ga)), Some(ga));
            }
        }
        assert_eq!(g.s_inv(&g.scalar(0)), None);
    }

    #[test]
    fn schnorr_group_laws() {
        laws(&SchnorrGroup::tiny());
        laws(&SchnorrGroup::toy());
        laws(&SchnorrGroup::sim64());
        assert_eq!(SchnorrGroup::sim64().order_bits(), 63);
    }

    #[test]
    fn secp256k1_group_laws() {
        laws(&Secp256k1);
    }

    #[test]
    fn decode_rejects_non_members() {
        let g = SchnorrGroup::tiny();
        // 5 is a quadratic non-residue mod 503.
        assert_eq!(g.decode(&5u64.to_be_bytes()), None);
        assert_eq!(g.decode(&0u64.to_be_bytes()), None);
        assert_eq!(g.decode(&[1, 2, 3]), None);
        assert_eq!(Secp256k1.decode(&[0]), None);
    }
}
