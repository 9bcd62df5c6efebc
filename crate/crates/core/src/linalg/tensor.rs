//! Kronecker products and single-mode contractions on `n^m`-length tensors.
//!
//! Index convention throughout: the multi-index `(i_0, .., i_{m-1})` of an
//! `m`-way tensor with side `n` lives at `Σ_a i_a n^(m-1-a)` (row-major,
//! first factor most significant). `kron` follows the same rule.

use super::matrix::{ComplexMatrix, C64, MAX_DENSE_ENTRIES, ZERO};
use crate::error::{size_limit, QtpeError, Result};

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.rows().checked_mul(b.rows());
    let cols = a.cols().checked_mul(b.cols());
    let entries = rows.zip(cols).and_then(|(r, c)| r.checked_mul(c));
    match entries {
        Some(e) if e <= MAX_DENSE_ENTRIES => {}
        _ => return Err(size_limit("kron entries", entries.unwrap_or(usize::MAX), MAX_DENSE_ENTRIES)),
    }
    let (br, bc) = (b.rows(), b.cols());
    let cols = a.cols() * bc;
    let mut out = ComplexMatrix::zeros(a.rows() * br, cols);
    let data = out.as_mut_slice();
    for i1 in 0..a.rows() {
        for j1 in 0..a.cols() {
            let x = a[(i1, j1)];
            if x == ZERO {
                continue;
            }
            for i2 in 0..br {
                let row = (i1 * br + i2) * cols + j1 * bc;
                for (o, &y) in data[row..row + bc].iter_mut().zip(b.row(i2)) {
                    *o = x * y;
                }
            }
        }
    }
    Ok(out)
}

/// `a ⊗ a ⊗ .. ⊗ a` with `k` factors (`k = 0` gives the 1x1 identity).
pub fn kron_power(a: &ComplexMatrix, k: usize) -> Result<ComplexMatrix> {
    let mut out = ComplexMatrix::identity(1);
    for _ in 0..k {
        out = kron(&out, a)?;
    }
    Ok(out)
}

/// `(1_left ⊗ u ⊗ 1_right)`, materialised.
pub fn embed(u: &ComplexMatrix, left: usize, right: usize) -> Result<ComplexMatrix> {
    kron(&kron(&ComplexMatrix::identity(left), u)?, &ComplexMatrix::identity(right))
}

/// Applies `u` to factor `mode` of `x` viewed as an `m`-way tensor of side `n`.
pub fn mode_apply(u: &ComplexMatrix, x: &[C64], mode: usize, n: usize, m: usize) -> Result<Vec<C64>> {
    check_mode(u, x.len(), mode, n, m)?;
    let mut y = vec![ZERO; x.len()];
    mode_apply_into(u, x, &mut y, mode, n, m);
    Ok(y)
}

fn check_mode(u: &ComplexMatrix, len: usize, mode: usize, n: usize, m: usize) -> Result<()> {
    if u.rows() != n || u.cols() != n {
        return Err(QtpeError::Shape {
            what: "mode_apply operator side",
            expected: n,
            got: if u.rows() != n { u.rows() } else { u.cols() },
        });
    }
    if mode >= m {
        return Err(QtpeError::Domain(format!("mode {mode} out of range for {m}-way tensor")));
    }
    let expected = n.checked_pow(m as u32).unwrap_or(usize::MAX);
    if len != expected {
        return Err(QtpeError::Shape {
            what: "mode_apply vector length",
            expected,
            got: len,
        });
    }
    Ok(())
}

/// Unchecked kernel behind [`mode_apply`]; `y` is overwritten.
pub fn mode_apply_into(u: &ComplexMatrix, x: &[C64], y: &mut [C64], mode: usize, n: usize, m: usize) {
    debug_assert_eq!(x.len(), y.len());
    let right = n.pow((m - mode - 1) as u32);
    let block = n * right;
    let u = u.as_slice();
    if right == 1 {
        for (xb, yb) in x.chunks_exact(n).zip(y.chunks_exact_mut(n)) {
            for (i, yi) in yb.iter_mut().enumerate() {
                let urow = &u[i * n..(i + 1) * n];
                let (mut re, mut im) = (0.0, 0.0);
                for (a, b) in urow.iter().zip(xb) {
                    re += a.re * b.re - a.im * b.im;
                    im += a.re * b.im + a.im * b.re;
                }
                *yi = C64::new(re, im);
            }
        }
        return;
    }
    for (xb, yb) in x.chunks_exact(block).zip(y.chunks_exact_mut(block)) {
        for (i, yrow) in yb.chunks_exact_mut(right).enumerate() {
            yrow.fill(ZERO);
            for (j, xrow) in xb.chunks_exact(right).enumerate() {
                let a = u[i * n + j];
                if a == ZERO {
                    continue;
                }
                for (o, b) in yrow.iter_mut().zip(xrow) {
                    o.re += a.re * b.re - a.im * b.im;
                    o.im += a.re * b.im + a.im * b.re;
                }
            }
        }
    }
}

/// `vec(M) ↦ vec(U^{⊗t} M (U^†)^{⊗t})` for a row-major vectorised
/// `n^t x n^t` matrix, as `2t` mode contractions. `u_conj` must be
/// `conj(U)`; `scratch` has the length of `x`.
pub fn conjugate_tensor_power(
    u: &ComplexMatrix,
    u_conj: &ComplexMatrix,
    x: &[C64],
    out: &mut [C64],
    scratch: &mut [C64],
    n: usize,
    t: usize,
) {
    let m = 2 * t;
    // Even modes write `scratch`, odd modes write `out`; 2t steps end in `out`.
    mode_apply_into(u, x, scratch, 0, n, m);
    for mode in 1..m {
        let op = if mode < t { u } else { u_conj };
        if mode % 2 == 1 {
            mode_apply_into(op, scratch, out, mode, n, m);
        } else {
            mode_apply_into(op, out, scratch, mode, n, m);
        }
    }
}
