//! Permutations of `[t]` and the combinatorial quantities that control the
//! error terms of the fixed-space analysis: unsigned Stirling numbers of
//! the first kind, falling factorials, and the two `t! x t!` matrices
//! indexed by permutations whose spectral norms bound the Gram deviation of
//! the `alpha_sigma` family.
//!
//! Every `t!`-indexed object in this crate uses the ordering returned by
//! [`all_permutations`]: lexicographic in one-line notation.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, size_limit, QtpeError, Result};

/// Largest `t` for which `t!` enumeration is allowed.
pub const MAX_ENUM_T: usize = 8;

/// Largest `t` for exact Stirling numbers in `u64`.
pub const MAX_STIRLING_T: usize = 20;

/// A bijection of `{0, .., t-1}` in one-line notation: `map[a] = sigma(a)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &x in &map {
            if x >= map.len() || seen[x] {
                return Err(domain(format!("{map:?} is not a bijection of 0..{}", map.len())));
            }
            seen[x] = true;
        }
        Ok(Self { map })
    }

    pub fn identity(t: usize) -> Self {
        Self {
            map: (0..t).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    #[inline]
    pub fn apply(&self, a: usize) -> usize {
        self.map[a]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(a, &b)| a == b)
    }

    /// `(self ∘ other)(a) = self(other(a))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.len(), other.len(), "composing permutations of different degree");
        Permutation {
            map: other.map.iter().map(|&b| self.map[b]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.len()];
        for (a, &b) in self.map.iter().enumerate() {
            inv[b] = a;
        }
        Permutation { map: inv }
    }

    /// Number of cycles, fixed points counted as 1-cycles.
    pub fn cycle_count(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut cycles = 0;
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            cycles += 1;
            let mut a = start;
            while !seen[a] {
                seen[a] = true;
                a = self.map[a];
            }
        }
        cycles
    }

    pub fn fixed_point_count(&self) -> usize {
        self.map.iter().enumerate().filter(|(a, &b)| *a == b).count()
    }

    /// Advances to the lexicographic successor in place; `false` at the last one.
    fn next_lexicographic(&mut self) -> bool {
        let m = &mut self.map;
        if m.len() < 2 {
            return false;
        }
        let mut i = m.len() - 1;
        while i > 0 && m[i - 1] >= m[i] {
            i -= 1;
        }
        if i == 0 {
            return false;
        }
        let mut j = m.len() - 1;
        while m[j] <= m[i - 1] {
            j -= 1;
        }
        m.swap(i - 1, j);
        m[i..].reverse();
        true
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// All `t!` permutations of `[t]` in lexicographic one-line order.
pub fn all_permutations(t: usize) -> Result<Vec<Permutation>> {
    if t == 0 || t > MAX_ENUM_T {
        return Err(size_limit("t", t, MAX_ENUM_T));
    }
    let mut out = Vec::with_capacity(factorial(t) as usize);
    let mut p = Permutation::identity(t);
    loop {
        out.push(p.clone());
        if !p.next_lexicographic() {
            break;
        }
    }
    Ok(out)
}

pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = acc * (n as u128 - i) / (i + 1);
    }
    acc as u64
}

/// Unsigned Stirling number of the first kind `[t, k]`, via
/// `[t+1, k] = t [t, k] + [t, k-1]` with `[1, 1] = 1` and `[t, 0] = 0`.
pub fn stirling_first(t: usize, k: usize) -> Result<u64> {
    if t == 0 || t > MAX_STIRLING_T || k == 0 || k > t {
        return Err(domain(format!(
            "stirling_first requires 1 <= k <= t <= {MAX_STIRLING_T}, got t={t}, k={k}"
        )));
    }
    // row[k] holds [n, k] for the current n.
    let mut row = vec![0u64; t + 1];
    row[1] = 1;
    for n in 1..t {
        for j in (1..=n + 1).rev() {
            row[j] = n as u64 * row[j] + row[j - 1];
        }
    }
    Ok(row[k])
}

/// `(d)_t = d (d-1) ... (d-t+1)`; `1` for `t = 0` and `0` for `t > d`.
pub fn falling_factorial(d: u64, t: u64) -> u128 {
    if t > d {
        return 0;
    }
    (0..t).map(|i| (d - i) as u128).product()
}

/// Fraction of `t`-tuples over `[d]` with a repeated entry, together with
/// its union bound `t(t-1)/(2d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistinctDeficit {
    pub exact: f64,
    pub bound: f64,
}

pub fn distinct_fraction_deficit(d: usize, t: usize) -> Result<DistinctDeficit> {
    if d == 0 || t == 0 || d < t {
        return Err(domain(format!("distinct_fraction_deficit requires d >= t >= 1, got d={d}, t={t}")));
    }
    // Product form avoids overflow of d^t.
    let kept: f64 = (1..t).map(|i| 1.0 - i as f64 / d as f64).product();
    Ok(DistinctDeficit {
        exact: 1.0 - kept,
        bound: (t * (t - 1)) as f64 / (2.0 * d as f64),
    })
}

fn perm_indexed_matrix(t: usize, entry: impl Fn(&Permutation) -> f64) -> Result<DMatrix<f64>> {
    let perms = all_permutations(t)?;
    let n = perms.len();
    let inverses: Vec<_> = perms.iter().map(Permutation::inverse).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            entry(&inverses[i].compose(&perms[j]))
        }
    }))
}

/// `M[s, s'] = d^(cycles(s^-1 s') - t)` off the diagonal, zero on it.
/// Requires `d > t^2`.
pub fn cycle_gram_matrix(t: usize, d: usize) -> Result<DMatrix<f64>> {
    if d <= t * t {
        return Err(QtpeError::Precondition(format!(
            "cycle_gram_matrix requires d > t^2, got t={t}, d={d}"
        )));
    }
    let d = d as f64;
    perm_indexed_matrix(t, |p| d.powi(p.cycle_count() as i32 - t as i32))
}

/// `N[s, s'] = eps^(t - fixed(s^-1 s'))` off the diagonal, zero on it.
/// Requires `0 < eps < 1/(2t)`.
pub fn fixed_point_matrix(t: usize, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps > 0.0 && eps < 1.0 / (2.0 * t as f64)) {
        return Err(QtpeError::Precondition(format!(
            "fixed_point_matrix requires 0 < eps < 1/(2t), got t={t}, eps={eps}"
        )));
    }
    perm_indexed_matrix(t, |p| eps.powi((t - p.fixed_point_count()) as i32))
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spectral norm of a real symmetric matrix by full eigendecomposition.
pub fn symmetric_spectral_norm(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)
        .into_iter()
        .fold(0.0, |acc, x| acc.max(x.abs()))
}
