//! Orthonormal bases and principal angles.

use nalgebra::{DMatrix, SymmetricEigen};

use super::matrix::{axpy, inner, norm, C64, ZERO};
use crate::error::{QtpeError, Result};

/// An orthonormal list of vectors in a common ambient space.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    ambient: usize,
    vectors: Vec<Vec<C64>>,
}

impl OrthoBasis {
    /// Wraps vectors that are already orthonormal; checked to `1e-8`.
    pub fn from_orthonormal(ambient: usize, vectors: Vec<Vec<C64>>) -> Result<Self> {
        for v in &vectors {
            if v.len() != ambient {
                return Err(QtpeError::Shape {
                    what: "basis vector length",
                    expected: ambient,
                    got: v.len(),
                });
            }
        }
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate().skip(i) {
                let want = if i == j { 1.0 } else { 0.0 };
                if (inner(a, b) - C64::new(want, 0.0)).norm() > 1e-8 {
                    return Err(QtpeError::Domain(format!("basis vectors {i},{j} are not orthonormal")));
                }
            }
        }
        Ok(Self { ambient, vectors })
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<C64>] {
        &self.vectors
    }

    /// Coefficients `⟨b_i, x⟩`.
    pub fn coefficients(&self, x: &[C64]) -> Vec<C64> {
        self.vectors.iter().map(|b| inner(b, x)).collect()
    }

    /// Orthogonal projection onto the span.
    pub fn project(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.ambient];
        for (b, c) in self.vectors.iter().zip(self.coefficients(x)) {
            axpy(c, b, &mut out);
        }
        out
    }

    /// In place `x ← x − P x`.
    pub fn remove_from(&self, x: &mut [C64]) {
        for b in &self.vectors {
            let c = inner(b, x);
            axpy(-c, b, x);
        }
    }
}

/// Orthonormal basis of `span(vectors)` with the numerical rank.
///
/// The rank counts singular values of the stacked matrix above
/// `rank_tol * σ_max`; they come from a Householder QR followed by an SVD
/// of the small triangular factor, so rank decisions are not squared.
pub fn orthonormalize(vectors: &[Vec<C64>], rank_tol: f64) -> Result<OrthoBasis> {
    let Some(first) = vectors.first() else {
        return Err(QtpeError::Domain("orthonormalize needs at least one vector".into()));
    };
    let n = first.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != n) {
        return Err(QtpeError::Shape {
            what: "vector length",
            expected: n,
            got: bad.len(),
        });
    }
    let k = vectors.len();
    let stacked = DMatrix::from_fn(n, k, |r, c| vectors[c][r]);
    let qr = stacked.qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    let mut out: Vec<Vec<C64>> = Vec::new();
    if smax > 0.0 {
        for &i in &order {
            if svd.singular_values[i] <= rank_tol * smax {
                break;
            }
            let coeffs = u.column(i);
            let mut v = vec![ZERO; n];
            for (j, c) in coeffs.iter().enumerate() {
                let col = q.column(j);
                for (vi, qi) in v.iter_mut().zip(col.iter()) {
                    *vi += qi * c;
                }
            }
            out.push(v);
        }
    }
    // One Gram-Schmidt sweep cleans up the last few ulps.
    for i in 0..out.len() {
        let (done, rest) = out.split_at_mut(i);
        let v = &mut rest[0];
        for b in done.iter() {
            let c = inner(b, v);
            axpy(-c, b, v);
        }
        let nv = norm(v);
        v.iter_mut().for_each(|z| *z /= nv);
    }
    Ok(OrthoBasis { ambient: n, vectors: out })
}

/// Largest principal-angle sine from `span(a)` into `span(b)`:
/// `max_{w ∈ span a, ‖w‖=1} ‖w − P_b w‖`.
pub fn max_principal_sine(a: &OrthoBasis, b: &OrthoBasis) -> Result<f64> {
    if a.ambient != b.ambient {
        return Err(QtpeError::Shape {
            what: "principal angle ambient dimension",
            expected: a.ambient,
            got: b.ambient,
        });
    }
    if a.rank() == 0 {
        return Ok(0.0);
    }
    let residuals: Vec<Vec<C64>> = a
        .vectors
        .iter()
        .map(|v| {
            let mut r = v.clone();
            b.remove_from(&mut r);
            r
        })
        .collect();
    let k = residuals.len();
    let gram = DMatrix::from_fn(k, k, |i, j| inner(&residuals[i], &residuals[j]));
    let top = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, &x| m.max(x));
    Ok(top.max(0.0).sqrt().min(1.0))
}

/// Symmetric closeness: the larger of the two directed sines.
pub fn subspace_distance(a: &OrthoBasis, b: &OrthoBasis) -> Result<f64> {
    Ok(max_principal_sine(a, b)?.max(max_principal_sine(b, a)?))
}

/// Directed sine from `span(a)^⊥` into `span(b)^⊥`.
///
/// Equals `‖P_b (1 − P_a)‖ = ‖(1 − P_a) P_b‖`, i.e. the directed sine from
/// `span(b)` into `span(a)`, so complements never need to be materialised.
pub fn max_principal_sine_complements(a: &OrthoBasis, b: &OrthoBasis) -> Result<f64> {
    max_principal_sine(b, a)
}
