//! Largest singular value of a linear map.
//!
//! Small maps are materialised and handed to a dense SVD. Larger ones go
//! through a Krylov method on the Hermitian PSD map `op† ∘ op`: either plain
//! power iteration or Lanczos with full reorthogonalisation and explicit
//! restarts. Both report the residual `‖op†op v − σ² v‖ / σ²` of their
//! final iterate and declare convergence only when that residual is within
//! tolerance *and* the eigenvalue estimate has moved by at most `tol`
//! (relative) for three consecutive steps.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, inner, norm, ComplexMatrix, C64, ZERO};
use super::rng::SeededRng;

/// Default dense threshold on the operator dimension.
pub const DEFAULT_DENSE_LIMIT: usize = 4096;
pub const DEFAULT_DENSE_TOL: f64 = 1e-9;
pub const DEFAULT_ITERATIVE_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 5000;

/// Eigenvalues of `op†op` below this are treated as absolute zero when
/// forming relative residuals.
const ABS_FLOOR: f64 = 1e-14;
const STREAK: usize = 3;

/// Dense threshold, overridable through `QTPE_DENSE_LIMIT`.
pub fn dense_limit_from_env() -> usize {
    std::env::var("QTPE_DENSE_LIMIT")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_DENSE_LIMIT)
}

/// A linear map on `C^N` supporting forward and adjoint application.
///
/// Implementations are shared read-only across threads.
pub trait LinearMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
    fn apply_adjoint(&self, x: &[C64], y: &mut [C64]);

    /// Materialises the map column by column.
    fn to_dense(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut out = ComplexMatrix::zeros(n, n);
        let mut e = vec![ZERO; n];
        let mut col = vec![ZERO; n];
        for c in 0..n {
            e[c] = C64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            e[c] = ZERO;
            for (r, z) in col.iter().enumerate() {
                out[(r, c)] = *z;
            }
        }
        out
    }
}

impl LinearMap for ComplexMatrix {
    fn dim(&self) -> usize {
        assert!(self.is_square());
        self.rows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.copy_from_slice(&self.matvec(x));
    }

    fn apply_adjoint(&self, x: &[C64], y: &mut [C64]) {
        y.copy_from_slice(&self.adjoint_matvec(x));
    }

    fn to_dense(&self) -> ComplexMatrix {
        self.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMethod {
    /// Dense when `dim <= dense_limit`, Lanczos otherwise.
    Auto,
    DenseSvd,
    PowerIteration,
    Lanczos,
}

impl SpectralMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Auto => "auto",
            Self::DenseSvd => "dense-svd",
            Self::PowerIteration => "power-iteration",
            Self::Lanczos => "lanczos",
        }
    }
}

impl std::str::FromStr for SpectralMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "dense" | "dense-svd" => Ok(Self::DenseSvd),
            "power" | "power-iteration" => Ok(Self::PowerIteration),
            "lanczos" | "iterative" => Ok(Self::Lanczos),
            other => Err(format!("unknown method `{other}` (auto, dense-svd, power-iteration, lanczos)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub method: SpectralMethod,
    /// `None` picks the per-method default.
    pub tol: Option<f64>,
    /// Cap on applications of `op†op`.
    pub max_iters: usize,
    pub dense_limit: usize,
    /// Lanczos basis size before an explicit restart.
    pub krylov_dim: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            method: SpectralMethod::Auto,
            tol: None,
            max_iters: DEFAULT_MAX_ITERS,
            dense_limit: DEFAULT_DENSE_LIMIT,
            krylov_dim: 300,
        }
    }
}

impl SpectralOptions {
    pub fn with_method(method: SpectralMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn resolved_method(&self, dim: usize) -> SpectralMethod {
        match self.method {
            SpectralMethod::Auto if dim <= self.dense_limit => SpectralMethod::DenseSvd,
            SpectralMethod::Auto => SpectralMethod::Lanczos,
            m => m,
        }
    }

    pub fn resolved_tol(&self, method: SpectralMethod) -> f64 {
        self.tol.unwrap_or(match method {
            SpectralMethod::DenseSvd => DEFAULT_DENSE_TOL,
            _ => DEFAULT_ITERATIVE_TOL,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub method: SpectralMethod,
    pub converged: bool,
}

/// Projects an iterate onto the complement of a known invariant subspace.
pub type Deflation<'a> = &'a (dyn Fn(&mut [C64]) + Sync);

pub fn spectral_norm(op: &dyn LinearMap, opts: &SpectralOptions, rng: &mut SeededRng) -> SpectralEstimate {
    spectral_norm_deflated(op, opts, rng, None)
}

pub fn spectral_norm_deflated(
    op: &dyn LinearMap,
    opts: &SpectralOptions,
    rng: &mut SeededRng,
    deflate: Option<Deflation<'_>>,
) -> SpectralEstimate {
    let n = op.dim();
    assert!(n >= 1, "spectral_norm on an empty space");
    let method = opts.resolved_method(n);
    let tol = opts.resolved_tol(method);
    match method {
        SpectralMethod::DenseSvd => dense(op),
        SpectralMethod::PowerIteration => power(op, tol, opts.max_iters, rng, deflate),
        SpectralMethod::Lanczos | SpectralMethod::Auto => {
            lanczos(op, tol, opts.max_iters, opts.krylov_dim.max(8), rng, deflate)
        }
    }
}

fn dense(op: &dyn LinearMap) -> SpectralEstimate {
    SpectralEstimate {
        value: op.to_dense().spectral_norm(),
        residual: 0.0,
        iterations: 0,
        method: SpectralMethod::DenseSvd,
        converged: true,
    }
}

/// `y = op†(op(x))`, with optional deflation of the result.
struct Normal<'a> {
    op: &'a dyn LinearMap,
    tmp: Vec<C64>,
    deflate: Option<Deflation<'a>>,
}

impl Normal<'_> {
    fn apply(&mut self, x: &[C64], y: &mut [C64]) {
        self.op.apply(x, &mut self.tmp);
        self.op.apply_adjoint(&self.tmp, y);
        if let Some(p) = self.deflate {
            p(y);
        }
    }
}

fn random_start(n: usize, rng: &mut SeededRng, deflate: Option<Deflation<'_>>) -> Vec<C64> {
    let mut v: Vec<C64> = (0..n).map(|_| rng.complex_normal()).collect();
    if let Some(p) = deflate {
        p(&mut v);
    }
    let nv = norm(&v);
    if nv > 0.0 {
        v.iter_mut().for_each(|z| *z /= nv);
    }
    v
}

struct Tracker {
    tol: f64,
    prev: Option<f64>,
    streak: usize,
}

impl Tracker {
    fn new(tol: f64) -> Self {
        Self { tol, prev: None, streak: 0 }
    }

    fn observe(&mut self, theta: f64) {
        if let Some(p) = self.prev {
            if (theta - p).abs() / theta.abs().max(ABS_FLOOR) <= self.tol {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
        self.prev = Some(theta);
    }

    fn settled(&self) -> bool {
        self.streak >= STREAK
    }
}

fn estimate(theta: f64, residual: f64, iterations: usize, method: SpectralMethod, converged: bool) -> SpectralEstimate {
    SpectralEstimate {
        value: theta.max(0.0).sqrt(),
        residual,
        iterations,
        method,
        converged,
    }
}

fn power(
    op: &dyn LinearMap,
    tol: f64,
    max_iters: usize,
    rng: &mut SeededRng,
    deflate: Option<Deflation<'_>>,
) -> SpectralEstimate {
    let n = op.dim();
    let mut normal = Normal {
        op,
        tmp: vec![ZERO; n],
        deflate,
    };
    let mut v = random_start(n, rng, deflate);
    if norm(&v) == 0.0 {
        return estimate(0.0, 0.0, 0, SpectralMethod::PowerIteration, true);
    }
    let mut w = vec![ZERO; n];
    let mut tracker = Tracker::new(tol);
    let (mut theta, mut residual) = (0.0, f64::INFINITY);
    for it in 1..=max_iters {
        normal.apply(&v, &mut w);
        theta = inner(&v, &w).re;
        let mut r = w.clone();
        axpy(C64::new(-theta, 0.0), &v, &mut r);
        residual = norm(&r) / theta.abs().max(ABS_FLOOR);
        tracker.observe(theta);
        if residual <= tol && tracker.settled() {
            return estimate(theta, residual, it, SpectralMethod::PowerIteration, true);
        }
        let nw = norm(&w);
        if nw <= ABS_FLOOR * 1e-10 {
            // op†op annihilates the start vector's Krylov space.
            return estimate(0.0, 0.0, it, SpectralMethod::PowerIteration, true);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    estimate(theta, residual, max_iters, SpectralMethod::PowerIteration, false)
}

fn lanczos(
    op: &dyn LinearMap,
    tol: f64,
    max_iters: usize,
    krylov_dim: usize,
    rng: &mut SeededRng,
    deflate: Option<Deflation<'_>>,
) -> SpectralEstimate {
    let n = op.dim();
    let mut normal = Normal {
        op,
        tmp: vec![ZERO; n],
        deflate,
    };
    let mut start = random_start(n, rng, deflate);
    if norm(&start) == 0.0 {
        return estimate(0.0, 0.0, 0, SpectralMethod::Lanczos, true);
    }
    let m_max = krylov_dim.min(n);
    let mut tracker = Tracker::new(tol);
    let mut iterations = 0;
    let mut w = vec![ZERO; n];

    loop {
        let mut basis: Vec<Vec<C64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut ritz = vec![1.0];
        for j in 0..m_max {
            normal.apply(&basis[j], &mut w);
            iterations += 1;
            let a = inner(&basis[j], &w).re;
            alpha.push(a);
            // Full reorthogonalisation, two passes.
            for _ in 0..2 {
                for b in &basis {
                    let c = inner(b, &w);
                    axpy(-c, b, &mut w);
                }
            }
            let bnorm = norm(&w);
            let (th, y) = top_ritz_pair(&alpha, &beta);
            let theta = th;
            let residual = bnorm * y[j].abs() / theta.abs().max(ABS_FLOOR);
            ritz = y;
            tracker.observe(theta);
            let invariant = bnorm <= 1e-12 * theta.abs().max(ABS_FLOOR);
            if (residual <= tol && tracker.settled()) || invariant {
                return estimate(theta, residual, iterations, SpectralMethod::Lanczos, true);
            }
            if iterations >= max_iters {
                return estimate(theta, residual, iterations, SpectralMethod::Lanczos, false);
            }
            if j + 1 == m_max {
                break;
            }
            beta.push(bnorm);
            basis.push(w.iter().map(|z| z / bnorm).collect());
        }
        // Restart from the current Ritz vector.
        let mut x = vec![ZERO; n];
        for (b, &c) in basis.iter().zip(&ritz) {
            axpy(C64::new(c, 0.0), b, &mut x);
        }
        if let Some(p) = deflate {
            p(&mut x);
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|z| *z /= nx);
        start = x;
    }
}

/// Largest eigenvalue of the symmetric tridiagonal matrix and its eigenvector.
fn top_ritz_pair(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (imax, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (theta, eig.eigenvectors.column(imax).iter().copied().collect())
}
