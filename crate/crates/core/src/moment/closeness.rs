//! How close the fixed space `W` on `(C^D ⊗ C^d)^{⊗t}` is to its
//! distinct-index variant `W'`.
//!
//! Registers are ordered outer-first: `(C^D)^{⊗t} ⊗ (C^d)^{⊗t}`, so
//! `α_σ = (α_1)_σ ⊗ (α_2)_σ` and `α'_σ = (α_1)_σ ⊗ (α'_2)_σ`.
//! Claims 2 and 4 concern `C^{D^t x D^t} ⊗ W_2` against `C^{D^t x D^t} ⊗ W'_2`;
//! tensoring both sides with a full factor leaves every principal angle
//! unchanged, so those are evaluated on the `d` side alone.

use serde::Serialize;

use super::fixed::{alpha_prime_inner_vec, alpha_sigma_vec, RANK_TOL};
use crate::error::{domain, size_limit, Result};
use crate::linalg::matrix::C64;
use crate::linalg::subspace::{max_principal_sine, max_principal_sine_complements, orthonormalize, OrthoBasis};
use crate::perm::all_permutations;

/// Largest `t` accepted by [`subspace_closeness_report`].
pub const MAX_CLOSENESS_T: usize = 3;
/// Cap on `(D d)^{2t}`.
pub const MAX_CLOSENESS_AMBIENT: usize = 1 << 22;

/// Rounding allowance when comparing against a bound.
const SLACK: f64 = 1e-12;

/// Directed sines between two subspaces and the bound they are checked against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosenessClaim {
    /// `max_{w ∈ A, ‖w‖=1} ‖w − P_B w‖`.
    pub forward: f64,
    /// Same with the roles of `A` and `B` exchanged.
    pub backward: f64,
    pub bound: f64,
    pub holds: bool,
}

impl ClosenessClaim {
    fn new(forward: f64, backward: f64, bound: f64) -> Self {
        Self {
            forward,
            backward,
            bound,
            holds: forward.max(backward) <= bound + SLACK,
        }
    }

    pub fn value(&self) -> f64 {
        self.forward.max(self.backward)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosenessReport {
    pub outer_dim: usize,
    pub inner_dim: usize,
    pub t: usize,
    pub rank_w: usize,
    pub rank_w_prime: usize,
    /// `W` against `W'`.
    pub claim1: ClosenessClaim,
    /// `C ⊗ W_2` against `C ⊗ W'_2`.
    pub claim2: ClosenessClaim,
    /// `W^⊥` against `W'^⊥`.
    pub claim3: ClosenessClaim,
    /// `(C ⊗ W_2)^⊥` against `(C ⊗ W'_2)^⊥`.
    pub claim4: ClosenessClaim,
}

impl ClosenessReport {
    pub fn all_hold(&self) -> bool {
        [&self.claim1, &self.claim2, &self.claim3, &self.claim4]
            .iter()
            .all(|c| c.holds)
    }
}

fn outer_product(a: &[C64], b: &[C64], a_side: usize, b_side: usize) -> Vec<C64> {
    // Vectorised kron of an a_side x a_side and a b_side x b_side matrix.
    let side = a_side * b_side;
    let mut out = vec![C64::new(0.0, 0.0); side * side];
    for i1 in 0..a_side {
        for j1 in 0..a_side {
            let x = a[i1 * a_side + j1];
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for i2 in 0..b_side {
                let row = (i1 * b_side + i2) * side + j1 * b_side;
                let src = &b[i2 * b_side..(i2 + 1) * b_side];
                for (o, y) in out[row..row + b_side].iter_mut().zip(src) {
                    *o = x * y;
                }
            }
        }
    }
    out
}

fn claims(a: &OrthoBasis, b: &OrthoBasis, near: f64, far: f64) -> Result<(ClosenessClaim, ClosenessClaim)> {
    let direct = ClosenessClaim::new(max_principal_sine(a, b)?, max_principal_sine(b, a)?, near);
    let perp = ClosenessClaim::new(
        max_principal_sine_complements(a, b)?,
        max_principal_sine_complements(b, a)?,
        far,
    );
    Ok((direct, perp))
}

/// The four closeness claims for `D = outer_dim`, `d = inner_dim`.
///
/// Claims 1 and 2 are checked against `2 √(t(t−1)/d)`, claims 3 and 4
/// against `2 (t(t−1)/d)^{1/4}`.
pub fn subspace_closeness_report(outer_dim: usize, inner_dim: usize, t: usize) -> Result<ClosenessReport> {
    if t == 0 || t > MAX_CLOSENESS_T {
        return Err(size_limit("t", t, MAX_CLOSENESS_T));
    }
    if outer_dim == 0 || inner_dim < t {
        return Err(domain(format!(
            "closeness needs D >= 1 and d >= t, got D = {outer_dim}, d = {inner_dim}, t = {t}"
        )));
    }
    let ambient = (outer_dim * inner_dim)
        .checked_pow(2 * t as u32)
        .filter(|&a| a <= MAX_CLOSENESS_AMBIENT)
        .ok_or_else(|| size_limit("ambient (D d)^(2t)", usize::MAX, MAX_CLOSENESS_AMBIENT))?;
    let perms = all_permutations(t)?;
    let big = outer_dim.pow(t as u32);
    let small = inner_dim.pow(t as u32);

    let mut w1 = Vec::new();
    let mut w2 = Vec::new();
    let mut w2p = Vec::new();
    for p in &perms {
        w1.push(alpha_sigma_vec(p, outer_dim, t));
        w2.push(alpha_sigma_vec(p, inner_dim, t));
        w2p.push(alpha_prime_inner_vec(p, inner_dim, t)?);
    }
    let w: Vec<Vec<C64>> = w1.iter().zip(&w2).map(|(a, b)| outer_product(a, b, big, small)).collect();
    let wp: Vec<Vec<C64>> = w1.iter().zip(&w2p).map(|(a, b)| outer_product(a, b, big, small)).collect();
    debug_assert_eq!(w[0].len(), ambient);

    let w = orthonormalize(&w, RANK_TOL)?;
    let wp = orthonormalize(&wp, RANK_TOL)?;
    let w2 = orthonormalize(&w2, RANK_TOL)?;
    let w2p = orthonormalize(&w2p, RANK_TOL)?;

    let ratio = (t * (t - 1)) as f64 / inner_dim as f64;
    let near = 2.0 * ratio.sqrt();
    let far = 2.0 * ratio.powf(0.25);
    let (claim1, claim3) = claims(&w, &wp, near, far)?;
    let (claim2, claim4) = claims(&w2, &w2p, near, far)?;
    Ok(ClosenessReport {
        outer_dim,
        inner_dim,
        t,
        rank_w: w.rank(),
        rank_w_prime: wp.rank(),
        claim1,
        claim2,
        claim3,
        claim4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::tensor::kron;
    use crate::moment::fixed::{alpha_prime_sigma, alpha_sigma};

    #[test]
    fn vectorised_kron_matches_dense_kron() {
        let p = &all_permutations(2).unwrap()[1];
        let a = alpha_sigma(p, 2, 2).unwrap();
        let b = alpha_sigma(p, 3, 2).unwrap();
        let dense = kron(&a, &b).unwrap();
        let v = outer_product(a.as_slice(), b.as_slice(), 4, 9);
        assert_eq!(v.as_slice(), dense.as_slice());
        let ap = alpha_prime_sigma(p, 2, 3, 2).unwrap();
        let vp = outer_product(a.as_slice(), &alpha_prime_inner_vec(p, 3, 2).unwrap(), 4, 9);
        assert_eq!(vp.as_slice(), ap.as_slice());
    }

    #[test]
    fn t1_is_exact() {
        let r = subspace_closeness_report(2, 3, 1).unwrap();
        for c in [&r.claim1, &r.claim2, &r.claim3, &r.claim4] {
            assert!(c.value() < 1e-12, "{c:?}");
            assert_eq!(c.bound, 0.0);
        }
        assert!(r.all_hold());
    }

    #[test]
    fn t2_bounds_hold_and_shrink() {
        let a = subspace_closeness_report(2, 4, 2).unwrap();
        let b = subspace_closeness_report(2, 8, 2).unwrap();
        assert!(a.all_hold() && b.all_hold(), "{a:?} {b:?}");
        assert!((a.claim1.bound - 2.0 * 0.5f64.sqrt()).abs() < 1e-15);
        assert!((b.claim1.bound - 1.0).abs() < 1e-15);
        assert!(b.claim1.value() < a.claim1.value());
        assert_eq!(a.rank_w, 2);
        assert_eq!(a.rank_w_prime, 2);
    }

    #[test]
    fn outer_factor_does_not_change_angles() {
        let a = subspace_closeness_report(1, 4, 2).unwrap();
        let b = subspace_closeness_report(2, 4, 2).unwrap();
        assert!((a.claim1.value() - a.claim2.value()).abs() < 1e-12);
        assert!((b.claim2.value() - a.claim2.value()).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(subspace_closeness_report(2, 4, 4).is_err());
        assert!(subspace_closeness_report(2, 1, 2).is_err());
    }
}
