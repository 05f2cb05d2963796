//! Shamir t-of-n sharing over the scalar field of a [`Group`], and Lagrange
//! interpolation at zero.

use std::collections::BTreeSet;

use rand::RngCore;

use super::group::Group;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShamirError {
    #[error("threshold unmet: {have} of {need} shares")]
    ThresholdUnmet { have: usize, need: usize },
    #[error("share index {0} repeated")]
    DuplicateIndex(u32),
    #[error("share index 0 is the secret itself")]
    ZeroIndex,
    #[error("invalid threshold {t} for {n} members")]
    BadThreshold { n: u32, t: u32 },
}

/// Evaluates the polynomial with coefficients `coeffs` (constant first) at `x`.
pub fn eval_poly<G: Group>(g: &G, coeffs: &[G::Scalar], x: &G::Scalar) -> G::Scalar {
    coeffs
        .iter()
        .rev()
        .fold(g.scalar(0), |acc, c| g.s_add(&g.s_mul(&acc, x), c))
}

/// Splits `secret` into shares for members `1..=n`; any `t` recover it.
pub fn split<G: Group, R: RngCore + ?Sized>(
    g: &G,
    secret: G::Scalar,
    n: u32,
    t: u32,
    rng: &mut R,
) -> Result<Vec<(u32, G::Scalar)>, ShamirError> {
    if t == 0 || t > n {
        return Err(ShamirError::BadThreshold { n, t });
    }
    let mut coeffs = vec![secret];
    coeffs.extend((1..t).map(|_| g.random_scalar(rng)));
    Ok((1..=n).map(|i| (i, eval_poly(g, &coeffs, &g.scalar(i as u64)))).collect())
}

fn check_indices(indices: impl Iterator<Item = u32>) -> Result<usize, ShamirError> {
    let mut seen = BTreeSet::new();
    for i in indices {
        if i == 0 {
            return Err(ShamirError::ZeroIndex);
        }
        if !seen.insert(i) {
            return Err(ShamirError::DuplicateIndex(i));
        }
    }
    Ok(seen.len())
}

/// Lagrange coefficients at zero for the given distinct, nonzero indices.
pub fn lagrange_at_zero<G: Group>(g: &G, indices: &[u32]) -> Result<Vec<G::Scalar>, ShamirError> {
    check_indices(indices.iter().copied())?;
    Ok(indices
        .iter()
        .map(|&i| {
            let xi = g.scalar(i as u64);
            let (num, den) = indices.iter().filter(|&&j| j != i).fold(
                (g.scalar(1), g.scalar(1)),
                |(num, den), &j| {
                    let xj = g.scalar(j as u64);
                    (g.s_mul(&num, &xj), g.s_mul(&den, &g.s_sub(&xj, &xi)))
                },
            );
            // Indices are distinct and below the group order, so den != 0.
            g.s_mul(&num, &g.s_inv(&den).expect("distinct indices"))
        })
        .collect())
}

/// Interpolates whatever shares are given, with no threshold check.
pub fn interpolate<G: Group>(g: &G, shares: &[(u32, G::Scalar)]) -> Result<G::Scalar, ShamirError> {
    let idx: Vec<u32> = shares.iter().map(|s| s.0).collect();
    let lambdas = lagrange_at_zero(g, &idx)?;
    Ok(shares
        .iter()
        .zip(&lambdas)
        .fold(g.scalar(0), |acc, ((_, y), l)| g.s_add(&acc, &g.s_mul(y, l))))
}

/// Recovers the secret from at least `t` distinct shares.
pub fn reconstruct<G: Group>(g: &G, t: u32, shares: &[(u32, G::Scalar)]) -> Result<G::Scalar, ShamirError> {
    let have = check_indices(shares.iter().map(|s| s.0))?;
    if have < t as usize {
        return Err(ShamirError::ThresholdUnmet {
            have,
            need: t as usize,
        });
    }
    interpolate(g, &shares[..t as usize])
}
