//! The fixed space `W` of `U ↦ U^{⊗t} · U^{†⊗t}`: register shuffles,
//! the normalised family `alpha_sigma`, and an orthonormal basis of their span.
//!
//! Shuffle convention: `Σ_σ` sends register `a` to register `σ(a)`, i.e.
//! `Σ_σ |j_0 .. j_{t-1}⟩ = |i⟩` with `i_{σ(a)} = j_a`. With this choice
//! `Σ_σ Σ_τ = Σ_{στ}` and `⟨α_σ', α_σ⟩ = n^{cycles(σ'^{-1} σ) − t}`; the
//! unit tests pin both.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, size_limit, QtpeError, Result};
use crate::linalg::matrix::{inner, ComplexMatrix, C64, ZERO};
use crate::linalg::subspace::{orthonormalize, OrthoBasis};
use crate::perm::{all_permutations, Permutation};

/// Largest `t` for the fixed-space construction.
pub const MAX_FIXED_T: usize = 6;
/// Cap on the vectorised matrix length `n^{2t}` of a basis element.
pub const MAX_VECTOR_LEN: usize = 1 << 25;
/// Singular values below this fraction of the largest count as dependent.
pub const RANK_TOL: f64 = 1e-8;
/// Smallest Gram eigenvalue for which Löwdin orthonormalisation is used.
const LOWDIN_MIN_EIG: f64 = 1e-8;

fn pow_checked(n: usize, e: usize, limit: usize, what: &'static str) -> Result<usize> {
    match n.checked_pow(e as u32) {
        Some(v) if v <= limit => Ok(v),
        other => Err(size_limit(what, other.unwrap_or(usize::MAX), limit)),
    }
}

/// Row index of `Σ_σ |j⟩` for every column multi-index `j`, as a lookup table.
fn shuffle_targets(sigma: &Permutation, n: usize, t: usize) -> Vec<usize> {
    let dim = n.pow(t as u32);
    let place: Vec<usize> = (0..t).map(|b| n.pow((t - 1 - b) as u32)).collect();
    let mut digits = vec![0usize; t];
    (0..dim)
        .map(|col| {
            let mut c = col;
            for a in (0..t).rev() {
                digits[a] = c % n;
                c /= n;
            }
            (0..t).map(|a| digits[a] * place[sigma.apply(a)]).sum()
        })
        .collect()
}

/// The `n^t x n^t` permutation matrix moving register `a` to register `σ(a)`.
pub fn shuffle_operator(sigma: &Permutation, n: usize, t: usize) -> Result<ComplexMatrix> {
    if sigma.len() != t {
        return Err(QtpeError::Shape {
            what: "permutation degree",
            expected: t,
            got: sigma.len(),
        });
    }
    let dim = pow_checked(n, t, 1 << 14, "shuffle side n^t")?;
    let mut m = ComplexMatrix::zeros(dim, dim);
    for (col, row) in shuffle_targets(sigma, n, t).into_iter().enumerate() {
        m[(row, col)] = C64::new(1.0, 0.0);
    }
    Ok(m)
}

/// Row-major vectorisation of `Σ_σ · D`, where `D` is diagonal with entries `diag`.
fn shuffled_diagonal_vec(sigma: &Permutation, n: usize, t: usize, diag: impl Fn(usize) -> f64) -> Vec<C64> {
    let dim = n.pow(t as u32);
    let mut v = vec![ZERO; dim * dim];
    for (col, row) in shuffle_targets(sigma, n, t).into_iter().enumerate() {
        v[row * dim + col] = C64::new(diag(col), 0.0);
    }
    v
}

/// `α_σ = Σ_σ · n^{-t/2} 1`, vectorised row-major.
pub fn alpha_sigma_vec(sigma: &Permutation, n: usize, t: usize) -> Vec<C64> {
    let s = (n as f64).powf(-(t as f64) / 2.0);
    shuffled_diagonal_vec(sigma, n, t, |_| s)
}

pub fn alpha_sigma(sigma: &Permutation, n: usize, t: usize) -> Result<ComplexMatrix> {
    if t > MAX_FIXED_T {
        return Err(size_limit("t", t, MAX_FIXED_T));
    }
    let dim = pow_checked(n, t, 1 << 12, "alpha side n^t")?;
    ComplexMatrix::from_vec(dim, dim, alpha_sigma_vec(sigma, n, t))
}

fn all_distinct(mut col: usize, n: usize, t: usize) -> bool {
    let mut seen = vec![false; n];
    for _ in 0..t {
        let digit = col % n;
        if seen[digit] {
            return false;
        }
        seen[digit] = true;
        col /= n;
    }
    true
}

/// `(α'_2)_σ = Σ_σ · n^{-t/2} Σ_{distinct j} |j⟩⟨j|`, vectorised row-major.
pub fn alpha_prime_inner_vec(sigma: &Permutation, n: usize, t: usize) -> Result<Vec<C64>> {
    if t > n {
        return Err(domain(format!("distinct {t}-tuples over [{n}] do not exist")));
    }
    let s = (n as f64).powf(-(t as f64) / 2.0);
    Ok(shuffled_diagonal_vec(sigma, n, t, |col| if all_distinct(col, n, t) { s } else { 0.0 }))
}

pub fn alpha_prime_inner(sigma: &Permutation, n: usize, t: usize) -> Result<ComplexMatrix> {
    let dim = pow_checked(n, t, 1 << 12, "alpha side n^t")?;
    ComplexMatrix::from_vec(dim, dim, alpha_prime_inner_vec(sigma, n, t)?)
}

/// `α'_σ = (α_1)_σ ⊗ (α'_2)_σ` on `(C^outer)^{⊗t} ⊗ (C^inner)^{⊗t}`.
///
/// Factor order is outer registers first, then inner registers; this is a
/// fixed relabelling of `(C^outer ⊗ C^inner)^{⊗t}` and leaves all inner
/// products unchanged.
pub fn alpha_prime_sigma(sigma: &Permutation, outer: usize, inner_dim: usize, t: usize) -> Result<ComplexMatrix> {
    let outer_part = alpha_sigma(sigma, outer, t)?;
    let inner_part = alpha_prime_inner(sigma, inner_dim, t)?;
    crate::linalg::kron(&outer_part, &inner_part)
}

/// `α_σ` family for `S_t` on `(C^n)^{⊗t}` with Gram matrix and an
/// orthonormal basis of `W = span α_σ`.
#[derive(Debug, Clone)]
pub struct FixedSpaceBasis {
    n: usize,
    t: usize,
    perms: Vec<Permutation>,
    alphas: Vec<Vec<C64>>,
    gram: DMatrix<f64>,
    ortho: OrthoBasis,
}

impl FixedSpaceBasis {
    pub fn new(n: usize, t: usize) -> Result<Self> {
        if n == 0 || t == 0 {
            return Err(domain("fixed space needs n >= 1 and t >= 1"));
        }
        if t > MAX_FIXED_T {
            return Err(size_limit("t", t, MAX_FIXED_T));
        }
        pow_checked(n, 2 * t, MAX_VECTOR_LEN, "vectorised length n^(2t)")?;
        let perms = all_permutations(t)?;
        let alphas: Vec<Vec<C64>> = perms.iter().map(|p| alpha_sigma_vec(p, n, t)).collect();
        let k = perms.len();
        let inverses: Vec<Permutation> = perms.iter().map(Permutation::inverse).collect();
        let nf = n as f64;
        let gram = DMatrix::from_fn(k, k, |i, j| {
            nf.powi(inverses[i].compose(&perms[j]).cycle_count() as i32 - t as i32)
        });
        for i in 0..k {
            for j in 0..k {
                let ip = inner(&alphas[i], &alphas[j]);
                if (ip - C64::new(gram[(i, j)], 0.0)).norm() > 1e-10 {
                    return Err(QtpeError::Validation(format!(
                        "alpha Gram entry ({i},{j}) = {ip} disagrees with cycle formula {}",
                        gram[(i, j)]
                    )));
                }
            }
        }
        let ortho = lowdin_or_fallback(&alphas, &gram)?;
        Ok(Self {
            n,
            t,
            perms,
            alphas,
            gram,
            ortho,
        })
    }

    pub fn local_dim(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Vectorised length `n^{2t}`.
    pub fn ambient(&self) -> usize {
        self.ortho.ambient()
    }

    pub fn permutations(&self) -> &[Permutation] {
        &self.perms
    }

    /// `α_σ` vectorised, in permutation order.
    pub fn alphas(&self) -> &[Vec<C64>] {
        &self.alphas
    }

    pub fn alpha_matrix(&self, i: usize) -> ComplexMatrix {
        let d = self.n.pow(self.t as u32);
        ComplexMatrix::from_vec(d, d, self.alphas[i].clone()).expect("alpha length is n^{2t}")
    }

    /// `gram[σ'][σ] = ⟨α_σ', α_σ⟩`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn ortho(&self) -> &OrthoBasis {
        &self.ortho
    }

    pub fn rank(&self) -> usize {
        self.ortho.rank()
    }

    /// Orthogonal projection of a vectorised matrix onto `W`.
    pub fn project(&self, x: &[C64]) -> Vec<C64> {
        self.ortho.project(x)
    }
}

/// Löwdin (`G^{-1/2}`) orthonormalisation, or rank-revealing QR when the
/// Gram matrix is too ill-conditioned (this happens once `t > n`).
fn lowdin_or_fallback(alphas: &[Vec<C64>], gram: &DMatrix<f64>) -> Result<OrthoBasis> {
    let eig = SymmetricEigen::new(gram.clone());
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    if min <= LOWDIN_MIN_EIG {
        return orthonormalize(alphas, RANK_TOL);
    }
    let q = &eig.eigenvectors;
    let k = alphas.len();
    let inv_sqrt = DMatrix::from_fn(k, k, |i, j| {
        (0..k)
            .map(|l| q[(i, l)] * q[(j, l)] / eig.eigenvalues[l].sqrt())
            .sum::<f64>()
    });
    let len = alphas[0].len();
    let vectors: Vec<Vec<C64>> = (0..k)
        .map(|col| {
            let mut v = vec![ZERO; len];
            for (row, a) in alphas.iter().enumerate() {
                let c = inv_sqrt[(row, col)];
                if c != 0.0 {
                    for (vi, ai) in v.iter_mut().zip(a) {
                        *vi += ai * c;
                    }
                }
            }
            v
        })
        .collect();
    OrthoBasis::from_orthonormal(len, vectors)
}
