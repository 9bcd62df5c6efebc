//! ε-goodness of unitaries on `V ⊗ V'` (`dim V = d`, `dim V' = d'`) with
//! respect to measuring `V` in the computational basis.
//!
//! Vectors in `V ⊗ V'` use index `v·d' + v'`.

use serde::{Deserialize, Serialize};

use crate::ensemble::UnitaryEnsemble;
use crate::error::{domain, QtpeError, Result};
use crate::linalg::matrix::{inner, norm, ComplexMatrix, C64, ZERO};
use crate::linalg::SeededRng;

/// Outcomes at or below this probability have no conditioned state.
pub const ZERO_PROBABILITY: f64 = 1e-12;
/// Cap on `d^{k−1} · d d'` for exhaustive tuple checks.
pub const MAX_EXHAUSTIVE: u128 = 100_000;
const UNIT_TOL: f64 = 1e-10;
const ORTHO_TOL: f64 = 1e-8;
/// Rounding allowance on the probability window.
const WINDOW_SLACK: f64 = 1e-12;

/// One outcome of measuring `V` on `U x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedOutcome {
    pub outcome: usize,
    pub probability: f64,
    /// `U x | v`, normalised; all zeros when `probability <= ZERO_PROBABILITY`.
    pub state: Vec<C64>,
}

impl ConditionedOutcome {
    pub fn is_null(&self) -> bool {
        self.probability <= ZERO_PROBABILITY
    }
}

fn check_dims(u: &ComplexMatrix, d: usize, dprime: usize) -> Result<()> {
    let n = d * dprime;
    if d == 0 || dprime == 0 || u.rows() != n || u.cols() != n {
        return Err(QtpeError::Shape {
            what: "unitary side d·d'",
            expected: n,
            got: u.rows(),
        });
    }
    Ok(())
}

fn check_unit(x: &[C64]) -> Result<()> {
    let nx = norm(x);
    if (nx - 1.0).abs() > UNIT_TOL {
        return Err(domain(format!("input vector has norm {nx}, expected 1")));
    }
    Ok(())
}

/// Splits an already-rotated vector `y = U x` by the `V` outcome.
fn condition(y: &[C64], d: usize, dprime: usize) -> Vec<ConditionedOutcome> {
    (0..d)
        .map(|v| {
            let block = &y[v * dprime..(v + 1) * dprime];
            let probability: f64 = block.iter().map(|z| z.norm_sqr()).sum();
            let mut state = vec![ZERO; d * dprime];
            if probability > ZERO_PROBABILITY {
                let s = 1.0 / probability.sqrt();
                for (o, z) in state[v * dprime..(v + 1) * dprime].iter_mut().zip(block) {
                    *o = z * s;
                }
            }
            ConditionedOutcome {
                outcome: v,
                probability,
                state,
            }
        })
        .collect()
}

/// Measures `V` on `U x`.
pub fn measure_first_factor(u: &ComplexMatrix, x: &[C64], d: usize, dprime: usize) -> Result<Vec<ConditionedOutcome>> {
    check_dims(u, d, dprime)?;
    if x.len() != d * dprime {
        return Err(QtpeError::Shape {
            what: "vector length d·d'",
            expected: d * dprime,
            got: x.len(),
        });
    }
    check_unit(x)?;
    Ok(condition(&u.matvec(x), d, dprime))
}

/// Outcome probability window `[(1 − 3ε)/d, (1 + 3ε)/d]`.
pub fn probability_window(d: usize, eps: f64) -> (f64, f64) {
    ((1.0 - 3.0 * eps) / d as f64, (1.0 + 3.0 * eps) / d as f64)
}

/// Per-vector decision; the witness is the outcome furthest from `1/d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorDecision {
    pub good: bool,
    pub worst_outcome: usize,
    pub worst_probability: f64,
    pub lower: f64,
    pub upper: f64,
}

fn decide_outcomes(outcomes: &[ConditionedOutcome], d: usize, eps: f64) -> VectorDecision {
    let (lower, upper) = probability_window(d, eps);
    let centre = 1.0 / d as f64;
    let worst = outcomes
        .iter()
        .max_by(|a, b| (a.probability - centre).abs().total_cmp(&(b.probability - centre).abs()))
        .expect("d >= 1 outcomes");
    VectorDecision {
        good: outcomes
            .iter()
            .all(|o| o.probability >= lower - WINDOW_SLACK && o.probability <= upper + WINDOW_SLACK),
        worst_outcome: worst.outcome,
        worst_probability: worst.probability,
        lower,
        upper,
    }
}

pub fn is_good_for_vector(u: &ComplexMatrix, x: &[C64], d: usize, dprime: usize, eps: f64) -> Result<VectorDecision> {
    Ok(decide_outcomes(&measure_first_factor(u, x, d, dprime)?, d, eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Probability,
    Overlap,
}

/// Where a goodness check failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: WitnessKind,
    /// 1-based position `j` of the unitary in the tuple.
    pub level: usize,
    /// Start vector index (`x_0`), or the index within the set.
    pub start: usize,
    /// Second set index for overlap failures.
    pub partner: Option<usize>,
    /// Outcomes `(i_1, …, i_{j−1})` leading to the failing vector.
    pub path: Vec<usize>,
    pub outcome: usize,
    pub value: f64,
    pub limit: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub good: bool,
    pub witness: Option<Witness>,
    /// Vector and overlap checks performed.
    pub checks: u64,
    /// Fraction of start/path combinations examined (1 for exhaustive).
    pub coverage: f64,
}

fn probability_witness(v: &VectorDecision, level: usize, start: usize, path: Vec<usize>) -> Witness {
    Witness {
        kind: WitnessKind::Probability,
        level,
        start,
        partner: None,
        path,
        outcome: v.worst_outcome,
        value: v.worst_probability,
        limit: (v.lower, v.upper),
    }
}

/// Per-vector goodness for every member of `xs` plus `|⟨Ux|v, Ux'|v⟩| <= 8ε`
/// for every pair and outcome.
pub fn is_good_for_set(u: &ComplexMatrix, xs: &[Vec<C64>], d: usize, dprime: usize, eps: f64) -> Result<Decision> {
    check_dims(u, d, dprime)?;
    for (i, a) in xs.iter().enumerate() {
        if a.len() != d * dprime {
            return Err(QtpeError::Shape {
                what: "vector length d·d'",
                expected: d * dprime,
                got: a.len(),
            });
        }
        for (j, b) in xs.iter().enumerate().skip(i) {
            let want = if i == j { 1.0 } else { 0.0 };
            if (inner(a, b) - C64::new(want, 0.0)).norm() > ORTHO_TOL {
                return Err(domain(format!("set vectors {i} and {j} are not orthonormal")));
            }
        }
    }
    let outcomes: Vec<Vec<ConditionedOutcome>> = xs.iter().map(|x| condition(&u.matvec(x), d, dprime)).collect();
    Ok(set_decision(&outcomes, d, dprime, eps))
}

fn set_decision(outcomes: &[Vec<ConditionedOutcome>], d: usize, dprime: usize, eps: f64) -> Decision {
    let mut checks = 0u64;
    for (i, o) in outcomes.iter().enumerate() {
        checks += 1;
        let v = decide_outcomes(o, d, eps);
        if !v.good {
            return Decision {
                good: false,
                witness: Some(probability_witness(&v, 1, i, Vec::new())),
                checks,
                coverage: 1.0,
            };
        }
    }
    let limit = 8.0 * eps;
    for (i, oi) in outcomes.iter().enumerate() {
        for (j, oj) in outcomes.iter().enumerate().skip(i + 1) {
            for v in 0..d {
                let (a, b) = (&oi[v], &oj[v]);
                if a.is_null() || b.is_null() {
                    continue;
                }
                checks += 1;
                let r = v * dprime..(v + 1) * dprime;
                let overlap = inner(&a.state[r.clone()], &b.state[r]).norm();
                if overlap > limit {
                    return Decision {
                        good: false,
                        witness: Some(Witness {
                            kind: WitnessKind::Overlap,
                            level: 1,
                            start: i,
                            partner: Some(j),
                            path: Vec::new(),
                            outcome: v,
                            value: overlap,
                            limit: (0.0, limit),
                        }),
                        checks,
                        coverage: 1.0,
                    };
                }
            }
        }
    }
    Decision {
        good: true,
        witness: None,
        checks,
        coverage: 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TupleMode {
    Exhaustive,
    /// Examine `budget` start/path combinations drawn without replacement.
    Sampled { budget: u64, seed: u64 },
}

fn basis_vector(n: usize, i: usize) -> Vec<C64> {
    let mut e = vec![ZERO; n];
    e[i] = C64::new(1.0, 0.0);
    e
}

/// Number of `(x_0, i_1, …, i_{k−1})` combinations: `d d' · d^{k−1}`.
pub fn tuple_paths(k: usize, d: usize, dprime: usize) -> u128 {
    (d as u128 * dprime as u128).saturating_mul((d as u128).saturating_pow(k.saturating_sub(1) as u32))
}

/// Checks `U_{j+1}` along one path, stopping at a null branch. Returns the
/// first failure.
fn walk_path(
    us: &[ComplexMatrix],
    d: usize,
    dprime: usize,
    eps: f64,
    start: usize,
    path: &[usize],
    checks: &mut u64,
) -> Option<Witness> {
    let mut x = basis_vector(d * dprime, start);
    for (j, &i) in path.iter().enumerate() {
        let out = condition(&us[j].matvec(&x), d, dprime);
        if out[i].is_null() {
            return None;
        }
        x = out[i].state.clone();
        let next = condition(&us[j + 1].matvec(&x), d, dprime);
        *checks += 1;
        let v = decide_outcomes(&next, d, eps);
        if !v.good {
            return Some(probability_witness(&v, j + 2, start, path[..=j].to_vec()));
        }
    }
    None
}

fn walk_tree(
    us: &[ComplexMatrix],
    d: usize,
    dprime: usize,
    eps: f64,
    start: usize,
    x: &[C64],
    path: &mut Vec<usize>,
    checks: &mut u64,
) -> Option<Witness> {
    let j = path.len();
    if j + 1 >= us.len() {
        return None;
    }
    let out = condition(&us[j].matvec(x), d, dprime);
    for o in out {
        if o.is_null() {
            continue;
        }
        path.push(o.outcome);
        let next = condition(&us[j + 1].matvec(&o.state), d, dprime);
        *checks += 1;
        let v = decide_outcomes(&next, d, eps);
        if !v.good {
            return Some(probability_witness(&v, j + 2, start, path.clone()));
        }
        if let Some(w) = walk_tree(us, d, dprime, eps, start, &o.state, path, checks) {
            return Some(w);
        }
        path.pop();
    }
    None
}

/// Whether the tuple `(U_k, …, U_1)` is ε-good; `us[0]` is `U_1`.
///
/// `U_1` must be good for the whole computational basis of `V ⊗ V'`; each
/// later `U_j` must be good for every `x_{j−1}` reachable from a basis
/// start vector through outcomes `i_1, …, i_{j−1}`. Outcomes of zero
/// probability have no conditioned state and are skipped.
pub fn is_tuple_good(us: &[ComplexMatrix], d: usize, dprime: usize, eps: f64, mode: TupleMode) -> Result<Decision> {
    let Some(first) = us.first() else {
        return Err(domain("tuple must contain at least one unitary"));
    };
    for u in us {
        check_dims(u, d, dprime)?;
    }
    let n = d * dprime;
    let k = us.len();
    let total = tuple_paths(k, d, dprime);
    if mode == TupleMode::Exhaustive && total > MAX_EXHAUSTIVE {
        return Err(domain(format!(
            "exhaustive check needs {total} start/path combinations (limit {MAX_EXHAUSTIVE}); use sampled mode"
        )));
    }
    let level1: Vec<Vec<ConditionedOutcome>> = (0..n)
        .map(|i| condition(&first.matvec(&basis_vector(n, i)), d, dprime))
        .collect();
    let mut decision = set_decision(&level1, d, dprime, eps);
    if !decision.good || k == 1 {
        return Ok(decision);
    }
    let mut checks = decision.checks;
    match mode {
        TupleMode::Exhaustive => {
            for start in 0..n {
                let x = basis_vector(n, start);
                if let Some(w) = walk_tree(us, d, dprime, eps, start, &x, &mut Vec::new(), &mut checks) {
                    decision.good = false;
                    decision.witness = Some(w);
                    break;
                }
            }
        }
        TupleMode::Sampled { budget, seed } => {
            let amount = (budget as u128).min(total);
            let total_usize = usize::try_from(total).map_err(|_| domain("path count exceeds usize"))?;
            let mut rng = SeededRng::new(seed, 0);
            let mut picks = rand::seq::index::sample(&mut rng, total_usize, amount as usize).into_vec();
            picks.sort_unstable();
            let per_start = total_usize / n;
            let mut path = vec![0usize; k - 1];
            for p in picks {
                let start = p / per_start;
                let mut rest = p % per_start;
                for slot in path.iter_mut().rev() {
                    *slot = rest % d;
                    rest /= d;
                }
                if let Some(w) = walk_path(us, d, dprime, eps, start, &path, &mut checks) {
                    decision.good = false;
                    decision.witness = Some(w);
                    break;
                }
            }
            decision.coverage = amount as f64 / total as f64;
        }
    }
    decision.checks = checks;
    Ok(decision)
}

/// Whether every tuple `(U_k, …, U_1)` with `U_j ∈ hs[j−1]` is ε-good.
/// The decision of the first failing tuple is returned with its indices.
pub fn is_ensemble_tuple_good(
    hs: &[UnitaryEnsemble],
    d: usize,
    dprime: usize,
    eps: f64,
    mode: TupleMode,
) -> Result<(Decision, Option<Vec<usize>>)> {
    if hs.is_empty() {
        return Err(domain("need at least one ensemble"));
    }
    let sizes: Vec<usize> = hs.iter().map(UnitaryEnsemble::size).collect();
    let mut idx = vec![0usize; hs.len()];
    loop {
        let us: Vec<ComplexMatrix> = idx.iter().zip(hs).map(|(&i, h)| h.unitaries()[i].clone()).collect();
        let dec = is_tuple_good(&us, d, dprime, eps, mode)?;
        if !dec.good {
            return Ok((dec, Some(idx)));
        }
        let mut j = 0;
        loop {
            if j == idx.len() {
                return Ok((dec, None));
            }
            idx[j] += 1;
            if idx[j] < sizes[j] {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Monte Carlo acceptance statistics of Haar tuples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub d: usize,
    pub dprime: usize,
    pub k: usize,
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    pub accepted: usize,
    pub rate: f64,
    /// Largest `|p − 1/d|` over every probability checked, per trial.
    pub max_deviation: Vec<f64>,
    /// `3ε/d`, the half-width of the probability window.
    pub half_width: f64,
}

fn max_deviation(us: &[ComplexMatrix], d: usize, dprime: usize) -> f64 {
    let n = d * dprime;
    let centre = 1.0 / d as f64;
    let mut worst: f64 = 0.0;
    let mut frontier: Vec<Vec<C64>> = (0..n).map(|i| basis_vector(n, i)).collect();
    for (j, u) in us.iter().enumerate() {
        let mut next = Vec::new();
        for x in &frontier {
            for o in condition(&u.matvec(x), d, dprime) {
                worst = worst.max((o.probability - centre).abs());
                if j + 1 < us.len() && !o.is_null() {
                    next.push(o.state);
                }
            }
        }
        frontier = next;
    }
    worst
}

/// Draws `trials` independent Haar `k`-tuples on `C^{d d'}` and checks each
/// exhaustively. Trial `i` uses stream `i` of `seed`.
pub fn calibrate_haar_acceptance(
    d: usize,
    dprime: usize,
    k: usize,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    if k == 0 || trials == 0 {
        return Err(domain("calibration needs k >= 1 and trials >= 1"));
    }
    let base = SeededRng::new(seed, 0);
    let mut accepted = 0;
    let mut devs = Vec::with_capacity(trials);
    for i in 0..trials {
        let mut rng = base.derive(i as u64);
        let us: Vec<ComplexMatrix> = (0..k).map(|_| crate::linalg::haar_unitary(d * dprime, &mut rng)).collect();
        if is_tuple_good(&us, d, dprime, eps, TupleMode::Exhaustive)?.good {
            accepted += 1;
        }
        devs.push(max_deviation(&us, d, dprime));
    }
    Ok(CalibrationReport {
        d,
        dprime,
        k,
        eps,
        trials,
        seed,
        accepted,
        rate: accepted as f64 / trials as f64,
        max_deviation: devs,
        half_width: 3.0 * eps / d as f64,
    })
}

/// `4 (s^{k+1} d^{k+2} d')² exp(−ε² d' / 16)`.
pub fn epsgood_failure_bound(k: usize, s: usize, d: usize, dprime: usize, eps: f64) -> f64 {
    let ln_base = (k as f64 + 1.0) * (s as f64).ln() + (k as f64 + 2.0) * (d as f64).ln() + (dprime as f64).ln();
    (4f64.ln() + 2.0 * ln_base - eps * eps * dprime as f64 / 16.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogBase {
    Natural,
    Two,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            Self::Natural => x.ln(),
            Self::Two => x.log2(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub value: f64,
    pub base: LogBase,
    pub violations: Vec<String>,
}

/// `30 log s (log s + log d) d^{2k+1} ε^{−2}`.
pub fn dprime_threshold(s: usize, d: usize, k: usize, eps: f64, base: LogBase) -> ThresholdReport {
    let ls = base.log(s as f64);
    let value = 30.0 * ls * (ls + base.log(d as f64)) * (d as f64).powi(2 * k as i32 + 1) / (eps * eps);
    let mut violations = Vec::new();
    if s < 4 {
        violations.push(format!("s = {s} < 4"));
    }
    if d < 100 {
        violations.push(format!("d = {d} < 100"));
    }
    ThresholdReport { value, base, violations }
}
