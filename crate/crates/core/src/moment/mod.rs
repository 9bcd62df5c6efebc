//! The `t`-th moment superoperator of an ensemble and the quantities
//! measured on it.
//!
//! Matrices on `(C^n)^{⊗t}` are vectorised row-major into `C^{n^{2t}}`,
//! viewed as `2t`-way tensors of side `n` (row registers first). Conjugation
//! by `U^{⊗t}` is then `U` on each row mode and `conj(U)` on each column
//! mode.

mod closeness;
mod fixed;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use closeness::{subspace_closeness_report, ClosenessClaim, ClosenessReport, MAX_CLOSENESS_AMBIENT, MAX_CLOSENESS_T};
pub use fixed::{
    alpha_prime_inner, alpha_prime_sigma, alpha_sigma, alpha_sigma_vec, shuffle_operator, FixedSpaceBasis,
    MAX_FIXED_T, RANK_TOL,
};

use crate::ensemble::UnitaryEnsemble;
use crate::error::{domain, size_limit, QtpeError, Result};
use crate::linalg::matrix::{ComplexMatrix, C64, ZERO};
use crate::linalg::spectral::{spectral_norm_deflated, LinearMap, SpectralMethod, SpectralOptions};
use crate::linalg::tensor::{conjugate_tensor_power, kron_power};
use crate::linalg::SeededRng;

/// Members per partial sum; partial sums are added in member order.
const CHUNK: usize = 4;
/// Largest `t` accepted by [`lambda`].
pub const MAX_LAMBDA_T: usize = 4;
/// Largest `n^{2t}` for the matrix-free path.
pub const MAX_ITERATIVE_AMBIENT: usize = 10_000_000;

/// `M ↦ (1/s) Σ_i U_i^{⊗t} M U_i^{†⊗t}`, applied matrix-free.
pub struct MomentOperator<'a> {
    ensemble: &'a UnitaryEnsemble,
    t: usize,
    n: usize,
    ambient: usize,
    conj: Vec<ComplexMatrix>,
    adjoint: Vec<ComplexMatrix>,
    transpose: Vec<ComplexMatrix>,
}

impl<'a> MomentOperator<'a> {
    pub fn new(ensemble: &'a UnitaryEnsemble, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(domain("moment order t must be >= 1"));
        }
        let n = ensemble.dim();
        let ambient = match n.checked_pow(2 * t as u32) {
            Some(a) if a <= MAX_ITERATIVE_AMBIENT => a,
            other => {
                return Err(size_limit(
                    "ambient n^(2t)",
                    other.unwrap_or(usize::MAX),
                    MAX_ITERATIVE_AMBIENT,
                ))
            }
        };
        let us = ensemble.unitaries();
        Ok(Self {
            ensemble,
            t,
            n,
            ambient,
            conj: us.iter().map(ComplexMatrix::conj).collect(),
            adjoint: us.iter().map(ComplexMatrix::adjoint).collect(),
            transpose: us.iter().map(ComplexMatrix::transpose).collect(),
        })
    }

    pub fn ensemble(&self) -> &UnitaryEnsemble {
        self.ensemble
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn local_dim(&self) -> usize {
        self.n
    }

    /// `n^{2t}`.
    pub fn ambient(&self) -> usize {
        self.ambient
    }

    /// `Φ` (or `Φ†` when `adjoint`) on a vectorised matrix.
    pub fn apply_vec(&self, x: &[C64], y: &mut [C64], adjoint: bool) {
        assert_eq!(x.len(), self.ambient);
        assert_eq!(y.len(), self.ambient);
        let (left, right) = if adjoint {
            (self.adjoint.as_slice(), self.transpose.as_slice())
        } else {
            (self.ensemble.unitaries(), self.conj.as_slice())
        };
        let s = left.len();
        let chunk_sum = |c: usize| {
            let mut acc = vec![ZERO; self.ambient];
            let mut out = vec![ZERO; self.ambient];
            let mut scratch = vec![ZERO; self.ambient];
            for i in c * CHUNK..((c + 1) * CHUNK).min(s) {
                conjugate_tensor_power(&left[i], &right[i], x, &mut out, &mut scratch, self.n, self.t);
                for (a, o) in acc.iter_mut().zip(&out) {
                    *a += o;
                }
            }
            acc
        };
        let chunks = s.div_ceil(CHUNK);
        // Partial sums are reduced in chunk order regardless of scheduling.
        let partials: Vec<Vec<C64>> = if chunks > 1 && rayon::current_num_threads() > 1 {
            (0..chunks).into_par_iter().map(chunk_sum).collect()
        } else {
            (0..chunks).map(chunk_sum).collect()
        };
        y.fill(ZERO);
        for p in &partials {
            for (yi, pi) in y.iter_mut().zip(p) {
                *yi += pi;
            }
        }
        let inv = 1.0 / s as f64;
        y.iter_mut().for_each(|z| *z *= inv);
    }

    pub fn apply(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        let side = self.n.pow(self.t as u32);
        if m.rows() != side || m.cols() != side {
            return Err(QtpeError::Shape {
                what: "moment operator argument side",
                expected: side,
                got: m.rows(),
            });
        }
        let mut y = vec![ZERO; self.ambient];
        self.apply_vec(m.as_slice(), &mut y, false);
        ComplexMatrix::from_vec(side, side, y)
    }

    /// `Φ^k`, by sequential iteration.
    pub fn apply_power(&self, x: &[C64], k: usize) -> Vec<C64> {
        let mut cur = x.to_vec();
        let mut next = vec![ZERO; x.len()];
        for _ in 0..k {
            self.apply_vec(&cur, &mut next, false);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }
}

impl LinearMap for MomentOperator<'_> {
    fn dim(&self) -> usize {
        self.ambient
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.apply_vec(x, y, false)
    }

    fn apply_adjoint(&self, x: &[C64], y: &mut [C64]) {
        self.apply_vec(x, y, true)
    }
}

/// Dense `n^{2t} x n^{2t}` superoperator `(1/s) Σ U^{⊗t} ⊗ conj(U)^{⊗t}`,
/// built from Kronecker powers (independent of the mode-contraction path).
pub fn superoperator_dense(e: &UnitaryEnsemble, t: usize, limit: usize) -> Result<ComplexMatrix> {
    let n = e.dim();
    let side = n
        .checked_pow(t as u32)
        .filter(|&s| s.checked_mul(s).is_some_and(|a| a <= limit))
        .ok_or_else(|| size_limit("dense superoperator side n^(2t)", n.saturating_pow(2 * t as u32), limit))?;
    let ambient = side * side;
    let mut out = ComplexMatrix::zeros(ambient, ambient);
    let w = C64::new(1.0 / e.size() as f64, 0.0);
    for u in e.unitaries() {
        let a = kron_power(u, t)?;
        let b = a.conj();
        let data = out.as_mut_slice();
        for i1 in 0..side {
            for j1 in 0..side {
                let x = a[(i1, j1)] * w;
                if x == ZERO {
                    continue;
                }
                for i2 in 0..side {
                    let row = (i1 * side + i2) * ambient + j1 * side;
                    for (o, y) in data[row..row + side].iter_mut().zip(b.row(i2)) {
                        *o += x * y;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Dense orthogonal projector onto `W`.
pub fn projector_dense(basis: &FixedSpaceBasis) -> ComplexMatrix {
    let n = basis.ambient();
    let mut p = ComplexMatrix::zeros(n, n);
    for b in basis.ortho().vectors() {
        for (r, br) in b.iter().enumerate() {
            if *br == ZERO {
                continue;
            }
            for (c, bc) in b.iter().enumerate() {
                p[(r, c)] += br * bc.conj();
            }
        }
    }
    p
}

/// `Φ_t − P_W` as a linear map.
pub struct MomentDeviation<'a> {
    phi: &'a MomentOperator<'a>,
    basis: &'a FixedSpaceBasis,
}

impl<'a> MomentDeviation<'a> {
    pub fn new(phi: &'a MomentOperator<'a>, basis: &'a FixedSpaceBasis) -> Result<Self> {
        if basis.ambient() != phi.ambient() {
            return Err(QtpeError::Shape {
                what: "fixed-space ambient dimension",
                expected: phi.ambient(),
                got: basis.ambient(),
            });
        }
        Ok(Self { phi, basis })
    }
}

impl LinearMap for MomentDeviation<'_> {
    fn dim(&self) -> usize {
        self.phi.ambient
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.phi.apply_vec(x, y, false);
        for (yi, pi) in y.iter_mut().zip(self.basis.project(x)) {
            *yi -= pi;
        }
    }

    fn apply_adjoint(&self, x: &[C64], y: &mut [C64]) {
        self.phi.apply_vec(x, y, true);
        for (yi, pi) in y.iter_mut().zip(self.basis.project(x)) {
            *yi -= pi;
        }
    }
}

/// Orthogonal projection onto `W` of a matrix on `(C^n)^{⊗t}`.
pub fn ideal_apply(basis: &FixedSpaceBasis, m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if m.rows() * m.cols() != basis.ambient() || m.rows() != m.cols() {
        return Err(QtpeError::Shape {
            what: "ideal projection argument entries",
            expected: basis.ambient(),
            got: m.rows() * m.cols(),
        });
    }
    ComplexMatrix::from_vec(m.rows(), m.cols(), basis.project(m.as_slice()))
}

/// Outcome of a `λ` measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub lambda: f64,
    pub method: SpectralMethod,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Closed-form bound the measurement is compared against, if any.
    pub bound_reference: Option<f64>,
    pub seed: u64,
    #[serde(rename = "ensemble-label")]
    pub ensemble_label: String,
    pub t: usize,
    pub dim: usize,
    pub degree: usize,
}

/// `λ = ‖Φ_t − P_W‖_∞` for the ensemble.
///
/// The dense path materialises the superoperator; the iterative paths apply
/// it matrix-free and keep every iterate in `W^⊥`.
pub fn lambda(e: &UnitaryEnsemble, t: usize, opts: &SpectralOptions, rng: &mut SeededRng) -> Result<SpectralReport> {
    if t == 0 || t > MAX_LAMBDA_T {
        return Err(size_limit("t", t, MAX_LAMBDA_T));
    }
    let n = e.dim();
    let ambient = n
        .checked_pow(2 * t as u32)
        .ok_or_else(|| size_limit("ambient n^(2t)", usize::MAX, MAX_ITERATIVE_AMBIENT))?;
    let method = opts.resolved_method(ambient);
    let seed = rng.seed();
    let basis = FixedSpaceBasis::new(n, t)?;
    let est = if method == SpectralMethod::DenseSvd {
        if ambient > opts.dense_limit {
            return Err(size_limit("dense ambient n^(2t)", ambient, opts.dense_limit));
        }
        let phi = superoperator_dense(e, t, opts.dense_limit)?;
        let value = phi.sub(&projector_dense(&basis)).spectral_norm();
        crate::linalg::SpectralEstimate {
            value,
            residual: 0.0,
            iterations: 0,
            method,
            converged: true,
        }
    } else {
        let phi = MomentOperator::new(e, t)?;
        let dev = MomentDeviation::new(&phi, &basis)?;
        let deflate = |v: &mut [C64]| basis.ortho().remove_from(v);
        let resolved = SpectralOptions { method, ..*opts };
        spectral_norm_deflated(&dev, &resolved, rng, Some(&deflate))
    };
    Ok(SpectralReport {
        lambda: est.value,
        method: est.method,
        iterations: est.iterations,
        residual: est.residual,
        converged: est.converged,
        bound_reference: None,
        seed,
        ensemble_label: e.label.clone(),
        t,
        dim: n,
        degree: e.size(),
    })
}

/// Row-major flat index of a register tuple over `[n]`.
fn tuple_index(idx: &[usize], n: usize) -> Result<usize> {
    idx.iter().try_fold(0usize, |acc, &i| {
        if i >= n {
            Err(domain(format!("index {i} out of range for local dimension {n}")))
        } else {
            Ok(acc * n + i)
        }
    })
}

/// `|⟨E_rr, (Φ^k − P_W)(E_cc)⟩|`: the deviation of the Haar value of the
/// balanced monomial `Π |u_{r_a c_a}|^2` after `k` iterations.
pub fn design_error_monomial(
    phi: &MomentOperator<'_>,
    basis: &FixedSpaceBasis,
    k: usize,
    rows: &[usize],
    cols: &[usize],
) -> Result<f64> {
    if k == 0 {
        return Err(domain("design error needs k >= 1 iterations"));
    }
    let t = phi.t();
    if rows.len() != t || cols.len() != t {
        return Err(QtpeError::Shape {
            what: "monomial index tuple length",
            expected: t,
            got: if rows.len() != t { rows.len() } else { cols.len() },
        });
    }
    let n = phi.local_dim();
    let side = n.pow(t as u32);
    let r = tuple_index(rows, n)?;
    let c = tuple_index(cols, n)?;
    let mut m = vec![ZERO; side * side];
    m[c * side + c] = C64::new(1.0, 0.0);
    let evolved = phi.apply_power(&m, k);
    let ideal = basis.project(&m);
    Ok((evolved[r * side + r] - ideal[r * side + r]).norm())
}

/// One row of [`design_error_table`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignErrorEntry {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub k: usize,
    pub error: f64,
}

/// Design error for every `(rows, cols)` pair of register tuples.
pub fn design_error_table(phi: &MomentOperator<'_>, basis: &FixedSpaceBasis, k: usize) -> Result<Vec<DesignErrorEntry>> {
    if k == 0 {
        return Err(domain("design error needs k >= 1 iterations"));
    }
    let t = phi.t();
    let n = phi.local_dim();
    let side = n.pow(t as u32);
    let digits = |mut x: usize| {
        let mut v = vec![0; t];
        for a in (0..t).rev() {
            v[a] = x % n;
            x /= n;
        }
        v
    };
    let mut out = Vec::with_capacity(side * side);
    for c in 0..side {
        let mut m = vec![ZERO; side * side];
        m[c * side + c] = C64::new(1.0, 0.0);
        let evolved = phi.apply_power(&m, k);
        let ideal = basis.project(&m);
        for r in 0..side {
            out.push(DesignErrorEntry {
                rows: digits(r),
                cols: digits(c),
                k,
                error: (evolved[r * side + r] - ideal[r * side + r]).norm(),
            });
        }
    }
    Ok(out)
}

/// Iterations of a `λ`-expander that give an `α`-approximate `t`-design:
/// `ceil((t ln n + ln(1/α)) / ln(1/λ))`, with the hidden constant set to 1.
pub fn design_iterations_needed(t: usize, n: usize, alpha: f64, lambda: f64) -> Result<u64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(domain(format!("design iterations need 0 < lambda < 1, got {lambda}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("design iterations need 0 < alpha < 1, got {alpha}")));
    }
    let num = t as f64 * (n as f64).ln() + (1.0 / alpha).ln();
    Ok((num / (1.0 / lambda).ln()).ceil() as u64)
}
