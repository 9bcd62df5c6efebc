//! Zigzag products of expanders and the closed-form `λ` bounds that go with
//! them.
//!
//! The outer ensemble `G` acts on `C^D` with degree `d`; inner ensembles act
//! on `C^d` (or `C^{d d'}` for the generalised product). The product space
//! is `C^D ⊗ C^d` with index `a·d + b`.

use serde::Serialize;

use crate::ensemble::{UnitaryEnsemble, MAX_MEMBERS, MAX_MEMBER_ENTRIES};
use crate::epsgood::{dprime_threshold, LogBase, ThresholdReport};
use crate::error::{domain, size_limit, Result};
use crate::linalg::matrix::{ComplexMatrix, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZigzagKind {
    Zigzag,
    Derandomised,
    Generalised,
}

impl std::str::FromStr for ZigzagKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zigzag" => Ok(Self::Zigzag),
            "derandomised" | "derandomized" => Ok(Self::Derandomised),
            "generalised" | "generalized" => Ok(Self::Generalised),
            other => Err(format!("unknown product `{other}` (zigzag, derandomised, generalised)")),
        }
    }
}

fn check_product_size(side: usize, members: usize) -> Result<()> {
    if members > MAX_MEMBERS {
        return Err(size_limit("product degree", members, MAX_MEMBERS));
    }
    match side.checked_mul(side) {
        Some(e) if e <= MAX_MEMBER_ENTRIES => Ok(()),
        other => Err(size_limit("product member entries", other.unwrap_or(usize::MAX), MAX_MEMBER_ENTRIES)),
    }
}

fn check_degree(g: &UnitaryEnsemble, inner_dim: usize, inner_what: &str) -> Result<()> {
    if g.size() != inner_dim {
        return Err(domain(format!(
            "outer degree {} does not match {inner_what} dimension {inner_dim}",
            g.size()
        )));
    }
    Ok(())
}

/// `Ġ : e_a ⊗ e_b ↦ (U_b e_a) ⊗ e_{−b}`, with `−` the identity when `g`
/// carries no involution.
pub fn g_dot(g: &UnitaryEnsemble) -> Result<ComplexMatrix> {
    let (big, d) = (g.dim(), g.size());
    check_product_size(big * d, 1)?;
    let inv = g.involution_or_identity();
    let mut m = ComplexMatrix::zeros(big * d, big * d);
    for (b, u) in g.unitaries().iter().enumerate() {
        for ap in 0..big {
            for a in 0..big {
                m[(ap * d + inv[b], a * d + b)] = u[(ap, a)];
            }
        }
    }
    Ok(m)
}

/// `Ġ : e_a ⊗ e_b ⊗ e_{b'} ↦ (U_b e_a) ⊗ e_b ⊗ e_{b'}` on `C^{D d d'}`.
pub fn g_dot_general(g: &UnitaryEnsemble, d: usize, dprime: usize) -> Result<ComplexMatrix> {
    check_degree(g, d, "declared inner")?;
    if dprime == 0 {
        return Err(domain("d' must be >= 1"));
    }
    let big = g.dim();
    let inner = d * dprime;
    check_product_size(big * inner, 1)?;
    let mut m = ComplexMatrix::zeros(big * inner, big * inner);
    for (b, u) in g.unitaries().iter().enumerate() {
        for bp in 0..dprime {
            let off = b * dprime + bp;
            for ap in 0..big {
                for a in 0..big {
                    m[(ap * inner + off, a * inner + off)] = u[(ap, a)];
                }
            }
        }
    }
    Ok(m)
}

/// `(1 ⊗ V) X` for `V` on the inner factor of `C^{outer} ⊗ C^{inner}`.
fn inner_left(v: &ComplexMatrix, x: &ComplexMatrix, outer: usize) -> ComplexMatrix {
    let inner = v.rows();
    let n = x.cols();
    let mut out = ComplexMatrix::zeros(x.rows(), n);
    let data = out.as_mut_slice();
    for a in 0..outer {
        for bp in 0..inner {
            let dst = (a * inner + bp) * n;
            for b in 0..inner {
                let c = v[(bp, b)];
                if c == ZERO {
                    continue;
                }
                for (o, y) in data[dst..dst + n].iter_mut().zip(x.row(a * inner + b)) {
                    *o += c * y;
                }
            }
        }
    }
    out
}

/// `X (1 ⊗ V)` for `V` on the inner factor.
fn inner_right(x: &ComplexMatrix, v: &ComplexMatrix, outer: usize) -> ComplexMatrix {
    inner_left(&v.transpose(), &x.transpose(), outer).transpose()
}

/// `{(1 ⊗ V_i) Ġ (1 ⊗ V_j)}` in row-major `(i, j)` order.
///
/// When both inputs carry an involution the product carries
/// `−(i, j) = (−j, −i)`.
pub fn zigzag(g: &UnitaryEnsemble, h: &UnitaryEnsemble) -> Result<UnitaryEnsemble> {
    check_degree(g, h.dim(), "inner")?;
    let s = h.size();
    let big = g.dim();
    check_product_size(big * h.dim(), s * s)?;
    let gd = g_dot(g)?;
    let right: Vec<ComplexMatrix> = h.unitaries().iter().map(|v| inner_right(&gd, v, big)).collect();
    let mut members = Vec::with_capacity(s * s);
    for vi in h.unitaries() {
        for r in &right {
            members.push(inner_left(vi, r, big));
        }
    }
    let involution = match (g.involution(), h.involution()) {
        (Some(_), Some(hi)) => Some(
            (0..s * s)
                .map(|ij| hi[ij % s] * s + hi[ij / s])
                .collect(),
        ),
        _ => None,
    };
    Ok(UnitaryEnsemble::new(big * h.dim(), members, involution)?
        .with_label(format!("zigzag({}, {})", g.label, h.label))
        .with_provenance("zigzag"))
}

/// `{(1 ⊗ V_i)(1 ⊗ V_j†) Ġ (1 ⊗ V_j)(1 ⊗ V_k)}` in `(i, j, k)` order,
/// carrying `−(i, j, k) = (−k, j, −i)`.
pub fn zigzag_derandomised(g: &UnitaryEnsemble, h: &UnitaryEnsemble) -> Result<UnitaryEnsemble> {
    check_degree(g, h.dim(), "inner")?;
    let (Some(_), Some(hi)) = (g.involution(), h.involution()) else {
        return Err(domain("derandomised zigzag needs explicitly Hermitian inputs (both with an involution)"));
    };
    let s = h.size();
    let big = g.dim();
    check_product_size(big * h.dim(), s * s * s)?;
    let gd = g_dot(g)?;
    let vs = h.unitaries();
    let mut members = Vec::with_capacity(s * s * s);
    let cores: Vec<ComplexMatrix> = vs
        .iter()
        .map(|vj| inner_left(&vj.adjoint(), &inner_right(&gd, vj, big), big))
        .collect();
    for vi in vs {
        for core in &cores {
            let left = inner_left(vi, core, big);
            for vk in vs {
                members.push(inner_right(&left, vk, big));
            }
        }
    }
    let involution = (0..s * s * s)
        .map(|idx| {
            let (i, j, k) = (idx / (s * s), (idx / s) % s, idx % s);
            hi[k] * s * s + j * s + hi[i]
        })
        .collect();
    Ok(UnitaryEnsemble::new(big * h.dim(), members, Some(involution))?
        .with_label(format!("derandomised({}, {})", g.label, h.label))
        .with_provenance("zigzag_derandomised"))
}

/// Words `V_{i_k}(k) Ġ ⋯ Ġ V_{i_1}(1)` (each `V` acting on the inner factor
/// `C^{d d'}`), ordered lexicographically in `(i_k, …, i_1)`. No involution.
pub fn zigzag_generalised(g: &UnitaryEnsemble, hs: &[UnitaryEnsemble], dprime: usize) -> Result<UnitaryEnsemble> {
    let Some(first) = hs.first() else {
        return Err(domain("generalised zigzag needs at least one inner ensemble"));
    };
    let d = g.size();
    let inner = d * dprime;
    let s = first.size();
    for (j, h) in hs.iter().enumerate() {
        if h.dim() != inner {
            return Err(domain(format!(
                "inner ensemble {j} has dimension {}, expected d·d' = {d}·{dprime} = {inner}",
                h.dim()
            )));
        }
        if h.size() != s {
            return Err(domain(format!("inner ensemble {j} has degree {}, expected {s}", h.size())));
        }
    }
    let k = hs.len();
    let count = (s as u128).pow(k as u32);
    if count > MAX_MEMBERS as u128 {
        return Err(size_limit("s^k", usize::try_from(count).unwrap_or(usize::MAX), MAX_MEMBERS));
    }
    let big = g.dim();
    check_product_size(big * inner, count as usize)?;
    let gd = g_dot_general(g, d, dprime)?;
    // words[w] holds Ġ V_{i_j}(j) ⋯ Ġ V_{i_1}(1) for the words built so far.
    let mut words: Vec<ComplexMatrix> = first
        .unitaries()
        .iter()
        .map(|v| inner_left(v, &ComplexMatrix::identity(big * inner), big))
        .collect();
    for h in &hs[1..] {
        let advanced: Vec<ComplexMatrix> = words.iter().map(|w| gd.matmul(w)).collect();
        let mut next = Vec::with_capacity(advanced.len() * s);
        for v in h.unitaries() {
            for w in &advanced {
                next.push(inner_left(v, w, big));
            }
        }
        words = next;
    }
    Ok(UnitaryEnsemble::new(big * inner, words, None)?
        .with_label(format!("generalised(k={k}, {})", g.label))
        .with_provenance(format!("zigzag_generalised k={k} d'={dprime}")))
}

/// `t(t−1)/d`.
fn ratio(t: usize, d: f64) -> f64 {
    (t * t.saturating_sub(1)) as f64 / d
}

/// A closed-form bound with the hypotheses it was evaluated outside of.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub value: f64,
    /// `value >= 1`, i.e. no information about `λ`.
    pub vacuous: bool,
    /// Violated hypotheses, human-readable.
    pub violations: Vec<String>,
}

impl BoundReport {
    fn new(value: f64, violations: Vec<String>) -> Self {
        Self {
            value,
            vacuous: value >= 1.0,
            violations,
        }
    }

    pub fn hypotheses_hold(&self) -> bool {
        self.violations.is_empty()
    }
}

fn degree_hypothesis(t: usize, d: usize) -> Vec<String> {
    if d < 10 * t * t {
        vec![format!("d = {d} < 10 t^2 = {}", 10 * t * t)]
    } else {
        Vec::new()
    }
}

/// `λ1 + λ2 + λ2² + 24 (t(t−1)/d)^{1/4}`.
pub fn bound_zigzag(l1: f64, l2: f64, t: usize, d: usize) -> BoundReport {
    let value = l1 + l2 + l2 * l2 + 24.0 * ratio(t, d as f64).powf(0.25);
    BoundReport::new(value, degree_hypothesis(t, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImprovedVariant {
    /// `(1 − μ2²) μ1²` under the root.
    AsPrinted,
    /// `((1 − μ2²) μ1)²` under the root.
    Squared,
}

fn mus(l1: f64, l2: f64, t: usize, d: usize) -> (f64, f64, f64) {
    let r = ratio(t, d as f64);
    let q = r.powf(0.25);
    (l1 + 9.0 * r.sqrt(), l2 + 2.0 * q, q)
}

/// `½(1−μ2²)μ1 + ½√(· + 4μ2²) + 2 (t(t−1)/d)^{1/4}` with
/// `μ1 = λ1 + 9√(t(t−1)/d)`, `μ2 = λ2 + 2 (t(t−1)/d)^{1/4}`.
pub fn bound_zigzag_improved(l1: f64, l2: f64, t: usize, d: usize, variant: ImprovedVariant) -> BoundReport {
    let (m1, m2, q) = mus(l1, l2, t, d);
    let a = 1.0 - m2 * m2;
    let under = match variant {
        ImprovedVariant::AsPrinted => a * m1 * m1,
        ImprovedVariant::Squared => (a * m1) * (a * m1),
    } + 4.0 * m2 * m2;
    let value = 0.5 * a * m1 + 0.5 * under.max(0.0).sqrt() + 2.0 * q;
    let mut violations = degree_hypothesis(t, d);
    if under < 0.0 {
        violations.push(format!("negative radicand {under} clamped to 0"));
    }
    BoundReport::new(value, violations)
}

/// `μ1 + 2μ2² + 2 (t(t−1)/d)^{1/4}`.
pub fn bound_zigzag_derandomised(l1: f64, l2: f64, t: usize, d: usize) -> BoundReport {
    let (m1, m2, q) = mus(l1, l2, t, d);
    BoundReport::new(m1 + 2.0 * m2 * m2 + 2.0 * q, degree_hypothesis(t, d))
}

/// Generalised-product bound plus the `d'` needed for ε-good inner ensembles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenBoundReport {
    #[serde(flatten)]
    pub bound: BoundReport,
    pub dprime_required: ThresholdReport,
    /// `d' >= dprime_required.value`.
    pub dprime_feasible: bool,
}

/// Inputs of [`bound_genzigzag`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct GenBoundInput {
    pub l1: f64,
    pub l2: f64,
    pub k: usize,
    pub t: usize,
    pub d: usize,
    pub dprime: usize,
    pub eps: f64,
    pub s: usize,
}

/// `8(λ1 + 7ε) + λ2^{k−1} + λ2^k + 47 (t(t−1)/(d d'))^{1/4}`.
pub fn bound_genzigzag(p: GenBoundInput) -> BoundReport {
    let dd = (p.d * p.dprime) as f64;
    let value = 8.0 * (p.l1 + 7.0 * p.eps)
        + p.l2.powi(p.k as i32 - 1)
        + p.l2.powi(p.k as i32)
        + 47.0 * ratio(p.t, dd).powf(0.25);
    let mut v = Vec::new();
    if p.s < 4 {
        v.push(format!("s = {} < 4", p.s));
    }
    if p.k as f64 > (p.s as f64).ln() {
        v.push(format!("k = {} > ln s = {:.4}", p.k, (p.s as f64).ln()));
    }
    if dd < (10 * p.t * p.t) as f64 {
        v.push(format!("d d' = {dd} < 10 t^2 = {}", 10 * p.t * p.t));
    }
    if p.eps >= 1e-2 {
        v.push(format!("eps = {} >= 1e-2", p.eps));
    }
    if p.k <= 1 {
        v.push(format!("k = {} makes λ2^(k-1) = 1", p.k));
    }
    BoundReport::new(value, v)
}

/// [`bound_genzigzag`] together with the `d'` feasibility check.
pub fn bound_genzigzag_report(p: GenBoundInput, base: LogBase) -> GenBoundReport {
    let dprime_required = dprime_threshold(p.s, p.d, p.k, p.eps, base);
    GenBoundReport {
        bound: bound_genzigzag(p),
        dprime_feasible: p.dprime as f64 >= dprime_required.value,
        dprime_required,
    }
}
