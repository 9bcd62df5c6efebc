//! Batch certification from a JSON config.
//!
//! ```json
//! { "schema_version": 1, "seed": 2,
//!   "steps": [ { "kind": "zigzag", "t": 1,
//!                "g": { "type": "random", "dim": 32, "degree": 8 },
//!                "h": { "type": "random", "dim": 8, "degree": 4 } } ] }
//! ```
//!
//! Step `i` draws from stream `i` of the root seed, so reports do not depend
//! on which other steps are present before it.

use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use qtpe_core::ensemble::{self, load, UnitaryEnsemble};
use qtpe_core::epsgood::calibrate_haar_acceptance;
use qtpe_core::linalg::spectral::dense_limit_from_env;
use qtpe_core::moment::{
    self, design_error_table, subspace_closeness_report, MAX_CLOSENESS_T, MAX_LAMBDA_T,
};
use qtpe_core::zigzag::{self, ZigzagKind};
use qtpe_core::{FixedSpaceBasis, MomentOperator, SeededRng, SpectralMethod, SpectralOptions, SpectralReport};

use crate::failure::{CliResult, Failure};
use crate::output::emit;

pub const SCHEMA_VERSION: u32 = 1;

/// Allowance on `λ <= bound` comparisons.
const BOUND_SLACK: f64 = 1e-6;
/// Allowance on design-error comparisons.
const DESIGN_SLACK: f64 = 1e-9;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    /// Overrides `--seed` when present.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub solver: Solver,
    pub steps: Vec<Step>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    solver: Solver,
    steps: Vec<serde_json::Map<String, Value>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    #[serde(default = "auto")]
    pub method: SpectralMethod,
    #[serde(default)]
    pub tol: Option<f64>,
}

fn auto() -> SpectralMethod {
    SpectralMethod::Auto
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            method: SpectralMethod::Auto,
            tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    File,
    Random,
    HaarSet,
    Pauli,
}

/// Where a step gets an ensemble from. `dim` and `degree` apply to the
/// sampled kinds, `path` to `file`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    #[serde(rename = "type")]
    pub kind: SourceKind,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub degree: Option<usize>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

/// One config step; written as `{"kind": "<name>", ...fields}`.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Step {
    Lambda {
        ensemble: Source,
        t: Vec<usize>,
        #[serde(default)]
        max_lambda: Option<f64>,
    },
    Zigzag {
        g: Source,
        h: Source,
        #[serde(default = "one")]
        t: usize,
        #[serde(default = "plain")]
        product: ZigzagKind,
    },
    Closeness {
        outer_dim: usize,
        inner_dim: usize,
        t: usize,
    },
    DesignError {
        ensemble: Source,
        t: usize,
        k: Vec<usize>,
    },
    Epsgood {
        d: usize,
        dprime: usize,
        #[serde(default = "one")]
        k: usize,
        eps: f64,
        trials: usize,
        min_rate: f64,
    },
}

fn one() -> usize {
    1
}

fn plain() -> ZigzagKind {
    ZigzagKind::Zigzag
}

#[derive(Debug, Serialize)]
pub struct StepReport {
    pub index: usize,
    pub kind: &'static str,
    pub pass: bool,
    pub failures: Vec<String>,
    /// Notes that do not fail the step, such as a vacuous bound.
    pub flags: Vec<String>,
    pub report: Value,
}

#[derive(Debug, Serialize)]
pub struct CertifyReport {
    pub schema_version: u32,
    pub seed: u64,
    pub pass: bool,
    pub steps: Vec<StepReport>,
}

fn field(path: String, msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{path}: {msg}"))
}

fn check_source(s: &Source, path: &str) -> CliResult<()> {
    let need = |name: &str, present: bool| -> CliResult<()> {
        if present {
            Ok(())
        } else {
            Err(field(format!("{path}.{name}"), format!("required for type {:?}", s.kind)))
        }
    };
    let forbid = |name: &str, present: bool| -> CliResult<()> {
        if present {
            Err(field(format!("{path}.{name}"), format!("not used by type {:?}", s.kind)))
        } else {
            Ok(())
        }
    };
    match s.kind {
        SourceKind::Random | SourceKind::HaarSet => {
            need("dim", s.dim.is_some())?;
            need("degree", s.degree.is_some())?;
            forbid("path", s.path.is_some())?;
            if s.dim == Some(0) {
                return Err(field(format!("{path}.dim"), "must be >= 1"));
            }
            let degree = s.degree.unwrap_or(0);
            if s.kind == SourceKind::Random && (degree < 4 || degree % 2 != 0) {
                return Err(field(format!("{path}.degree"), format!("must be even and >= 4, got {degree}")));
            }
            if degree == 0 {
                return Err(field(format!("{path}.degree"), "must be >= 1"));
            }
        }
        SourceKind::File => {
            need("path", s.path.is_some())?;
            forbid("dim", s.dim.is_some())?;
            forbid("degree", s.degree.is_some())?;
            let p = s.path.as_ref().expect("checked above");
            if !p.exists() {
                return Err(Failure::Io(format!("{path}.path: {} does not exist", p.display())));
            }
        }
        SourceKind::Pauli => {
            forbid("dim", s.dim.is_some())?;
            forbid("degree", s.degree.is_some())?;
            forbid("path", s.path.is_some())?;
        }
    }
    Ok(())
}

fn check_t(t: usize, max: usize, path: String) -> CliResult<()> {
    if t == 0 || t > max {
        return Err(field(path, format!("must be in 1..={max}, got {t}")));
    }
    Ok(())
}

/// Checks every parameter before any step runs.
pub fn validate(c: &Config) -> CliResult<()> {
    if c.schema_version != SCHEMA_VERSION {
        return Err(field(
            "schema_version".into(),
            format!("unsupported version {} (expected {SCHEMA_VERSION})", c.schema_version),
        ));
    }
    if let Some(tol) = c.solver.tol {
        if !(tol > 0.0) {
            return Err(field("solver.tol".into(), "must be positive"));
        }
    }
    for (i, step) in c.steps.iter().enumerate() {
        let at = |f: &str| format!("steps[{i}].{f}");
        match step {
            Step::Lambda { ensemble, t, max_lambda } => {
                check_source(ensemble, &at("ensemble"))?;
                if t.is_empty() {
                    return Err(field(at("t"), "must list at least one order"));
                }
                for (j, &tj) in t.iter().enumerate() {
                    check_t(tj, MAX_LAMBDA_T, at(&format!("t[{j}]")))?;
                }
                if let Some(m) = max_lambda {
                    if !(*m >= 0.0) {
                        return Err(field(at("max_lambda"), "must be >= 0"));
                    }
                }
            }
            Step::Zigzag { g, h, t, product } => {
                check_source(g, &at("g"))?;
                check_source(h, &at("h"))?;
                check_t(*t, MAX_LAMBDA_T, at("t"))?;
                if *product == ZigzagKind::Generalised {
                    return Err(field(at("product"), "use the zigzag subcommand for generalised products"));
                }
                if let (Some(deg), Some(dim)) = (source_degree(g), source_dim(h)) {
                    if deg != dim {
                        return Err(field(
                            at("h.dim"),
                            format!("inner dimension {dim} must equal outer degree {deg}"),
                        ));
                    }
                }
            }
            Step::Closeness { outer_dim, inner_dim, t } => {
                check_t(*t, MAX_CLOSENESS_T, at("t"))?;
                if *outer_dim == 0 {
                    return Err(field(at("outer_dim"), "must be >= 1"));
                }
                if inner_dim < t {
                    return Err(field(at("inner_dim"), format!("must be >= t = {t}")));
                }
            }
            Step::DesignError { ensemble, t, k } => {
                check_source(ensemble, &at("ensemble"))?;
                check_t(*t, MAX_LAMBDA_T, at("t"))?;
                if k.is_empty() || k.contains(&0) {
                    return Err(field(at("k"), "must list iteration counts >= 1"));
                }
            }
            Step::Epsgood {
                d,
                dprime,
                k,
                eps,
                trials,
                min_rate,
            } => {
                if *d < 2 {
                    return Err(field(at("d"), "must be >= 2"));
                }
                if *dprime == 0 {
                    return Err(field(at("dprime"), "must be >= 1"));
                }
                if *k == 0 {
                    return Err(field(at("k"), "must be >= 1"));
                }
                if !(*eps >= 0.0) {
                    return Err(field(at("eps"), "must be >= 0"));
                }
                if *trials == 0 {
                    return Err(field(at("trials"), "must be >= 1"));
                }
                if !(0.0..=1.0).contains(min_rate) {
                    return Err(field(at("min_rate"), "must lie in [0, 1]"));
                }
            }
        }
    }
    Ok(())
}

fn source_degree(s: &Source) -> Option<usize> {
    match s.kind {
        SourceKind::Pauli => Some(4),
        _ => s.degree,
    }
}

fn source_dim(s: &Source) -> Option<usize> {
    match s.kind {
        SourceKind::Pauli => Some(2),
        _ => s.dim,
    }
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Failure {
    let path = e.path().to_string();
    Failure::Usage(format!("config field `{path}`: {}", e.into_inner()))
}

pub fn parse(text: &str) -> CliResult<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(path_error)?;
    let mut steps = Vec::with_capacity(raw.steps.len());
    for (i, mut map) in raw.steps.into_iter().enumerate() {
        let at = format!("steps[{i}]");
        let kind = match map.remove("kind") {
            Some(Value::String(k)) => k,
            Some(_) => return Err(field(format!("{at}.kind"), "must be a string")),
            None => return Err(field(format!("{at}.kind"), "missing")),
        };
        // Re-wrap as an externally tagged value so field paths survive.
        let wrapped = Value::Object(serde_json::Map::from_iter([(kind.clone(), Value::Object(map))]));
        let step: Step = serde_path_to_error::deserialize(wrapped).map_err(|e| {
            let inner = e.path().to_string();
            let rest = inner.strip_prefix(kind.as_str()).unwrap_or("");
            Failure::Usage(format!("config field `{at}{rest}`: {}", e.into_inner()))
        })?;
        steps.push(step);
    }
    Ok(Config {
        schema_version: raw.schema_version,
        seed: raw.seed,
        solver: raw.solver,
        steps,
    })
}

fn materialise(s: &Source, rng: &mut SeededRng) -> CliResult<UnitaryEnsemble> {
    let (dim, degree) = (s.dim.unwrap_or(0), s.degree.unwrap_or(0));
    Ok(match s.kind {
        SourceKind::File => load(s.path.as_deref().expect("validated"))?,
        SourceKind::Random => ensemble::sample_random_qtpe(dim, degree, rng)?,
        SourceKind::HaarSet => ensemble::sample_haar_set(dim, degree, rng)?,
        SourceKind::Pauli => ensemble::pauli_ensemble(),
    })
}

struct Runner {
    opts: SpectralOptions,
}

struct Outcome {
    failures: Vec<String>,
    flags: Vec<String>,
    report: Value,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialise")
}

impl Runner {
    fn lambda(&self, e: &UnitaryEnsemble, t: usize, rng: SeededRng, out: &mut Outcome) -> CliResult<SpectralReport> {
        let mut rng = rng;
        let r = moment::lambda(e, t, &self.opts, &mut rng)?;
        if !r.converged {
            out.failures.push(format!(
                "λ of {} at t = {t} did not converge (residual {:.3e})",
                e.label, r.residual
            ));
        }
        Ok(r)
    }

    fn step(&self, step: &Step, rng: SeededRng) -> CliResult<Outcome> {
        let mut out = Outcome {
            failures: Vec::new(),
            flags: Vec::new(),
            report: Value::Null,
        };
        let mut sampler = rng.derive(0);
        match step {
            Step::Lambda {
                ensemble,
                t,
                max_lambda,
            } => {
                let e = materialise(ensemble, &mut sampler)?;
                let mut reports = Vec::new();
                for (j, &tj) in t.iter().enumerate() {
                    let r = self.lambda(&e, tj, rng.derive(1 + j as u64), &mut out)?;
                    if let Some(m) = max_lambda {
                        if r.lambda > *m {
                            out.failures.push(format!("λ = {} at t = {tj} exceeds {m}", r.lambda));
                        }
                    }
                    reports.push(r);
                }
                out.report = to_value(&reports);
            }
            Step::Zigzag { g, h, t, product } => {
                let ge = materialise(g, &mut sampler)?;
                let he = materialise(h, &mut sampler)?;
                let z = match product {
                    ZigzagKind::Derandomised => zigzag::zigzag_derandomised(&ge, &he)?,
                    _ => zigzag::zigzag(&ge, &he)?,
                };
                let l1 = self.lambda(&ge, *t, rng.derive(1), &mut out)?;
                let l2 = self.lambda(&he, *t, rng.derive(2), &mut out)?;
                let lz = self.lambda(&z, *t, rng.derive(3), &mut out)?;
                let bound = match product {
                    ZigzagKind::Derandomised => zigzag::bound_zigzag_derandomised(l1.lambda, l2.lambda, *t, ge.size()),
                    _ => zigzag::bound_zigzag(l1.lambda, l2.lambda, *t, ge.size()),
                };
                let within = lz.lambda <= bound.value + BOUND_SLACK;
                // At t = 1 the error term vanishes and the bound needs no degree hypothesis.
                let binding = bound.hypotheses_hold() || *t == 1;
                if bound.vacuous {
                    out.flags.push("vacuous".into());
                }
                if !bound.hypotheses_hold() {
                    out.flags.push(format!("outside hypotheses: {}", bound.violations.join("; ")));
                }
                if binding && !within {
                    out.failures
                        .push(format!("λ(product) = {} exceeds bound {}", lz.lambda, bound.value));
                }
                out.report = serde_json::json!({
                    "product": product,
                    "members": z.size(),
                    "dim": z.dim(),
                    "lambda1": l1,
                    "lambda2": l2,
                    "lambda": lz,
                    "bound": bound,
                    "within_bound": within,
                });
            }
            Step::Closeness { outer_dim, inner_dim, t } => {
                let r = subspace_closeness_report(*outer_dim, *inner_dim, *t)?;
                if !r.all_hold() {
                    out.failures.push("a closeness claim exceeds its bound".into());
                }
                out.report = to_value(&r);
            }
            Step::DesignError { ensemble, t, k } => {
                let e = materialise(ensemble, &mut sampler)?;
                let l = self.lambda(&e, *t, rng.derive(1), &mut out)?;
                let phi = MomentOperator::new(&e, *t)?;
                let basis = FixedSpaceBasis::new(e.dim(), *t)?;
                let mut rows = Vec::new();
                for &kk in k {
                    let table = design_error_table(&phi, &basis, kk)?;
                    let max = table.iter().fold(0.0, |m: f64, x| m.max(x.error));
                    let cap = l.lambda.powi(kk as i32);
                    if max > cap + DESIGN_SLACK {
                        out.failures.push(format!("design error {max} at k = {kk} exceeds λ^k = {cap}"));
                    }
                    rows.push(serde_json::json!({ "k": kk, "max_error": max, "lambda_pow_k": cap }));
                }
                out.report = serde_json::json!({ "lambda": l, "errors": rows });
            }
            Step::Epsgood {
                d,
                dprime,
                k,
                eps,
                trials,
                min_rate,
            } => {
                let r = calibrate_haar_acceptance(*d, *dprime, *k, *eps, *trials, sampler.next_u64())?;
                if r.rate < *min_rate {
                    out.failures.push(format!("acceptance rate {} below {min_rate}", r.rate));
                }
                out.report = to_value(&r);
            }
        }
        Ok(out)
    }
}

fn kind_name(s: &Step) -> &'static str {
    match s {
        Step::Lambda { .. } => "lambda",
        Step::Zigzag { .. } => "zigzag",
        Step::Closeness { .. } => "closeness",
        Step::DesignError { .. } => "design-error",
        Step::Epsgood { .. } => "epsgood",
    }
}

/// Runs a parsed, validated config.
pub fn certify(c: &Config, seed: u64) -> CliResult<CertifyReport> {
    let mut opts = SpectralOptions::with_method(c.solver.method);
    opts.tol = c.solver.tol;
    opts.dense_limit = dense_limit_from_env();
    let runner = Runner { opts };
    let root = SeededRng::new(seed, 0);
    let mut steps = Vec::with_capacity(c.steps.len());
    for (i, step) in c.steps.iter().enumerate() {
        let o = runner
            .step(step, root.derive(i as u64))
            .map_err(|f| match f {
                Failure::Usage(m) => Failure::Usage(format!("steps[{i}]: {m}")),
                other => other,
            })?;
        steps.push(StepReport {
            index: i,
            kind: kind_name(step),
            pass: o.failures.is_empty(),
            failures: o.failures,
            flags: o.flags,
            report: o.report,
        });
    }
    Ok(CertifyReport {
        schema_version: SCHEMA_VERSION,
        seed,
        pass: steps.iter().all(|s| s.pass),
        steps,
    })
}

pub fn run(path: &Path, cli_seed: u64, csv: bool, out: Option<&Path>) -> CliResult<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let config = parse(&text)?;
    validate(&config)?;
    let seed = config.seed.unwrap_or(cli_seed);
    let report = certify(&config, seed)?;
    emit(&report, csv, out)?;
    if report.pass {
        return Ok(());
    }
    let failed: Vec<String> = report
        .steps
        .iter()
        .filter(|s| !s.pass)
        .map(|s| format!("steps[{}] ({}): {}", s.index, s.kind, s.failures.join("; ")))
        .collect();
    let only_convergence = report
        .steps
        .iter()
        .flat_map(|s| &s.failures)
        .all(|f| f.contains("did not converge"));
    let msg = failed.join("\n");
    Err(if only_convergence {
        Failure::NoConvergence(msg)
    } else {
        Failure::Check(msg)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_path_in_parse_errors() {
        let text = r#"{"schema_version": 1, "steps": [{"kind": "lambda", "ensemble": {"type": "pauli"}, "t": "x"}]}"#;
        let msg = parse(text).unwrap_err().to_string();
        assert!(msg.contains("steps[0].t"), "{msg}");
    }

    #[test]
    fn validation_names_the_field() {
        let text = r#"{"schema_version": 1, "steps": [
            {"kind": "closeness", "outer_dim": 2, "inner_dim": 4, "t": 2},
            {"kind": "lambda", "ensemble": {"type": "random", "dim": 2, "degree": 3}, "t": [1]}]}"#;
        let msg = validate(&parse(text).unwrap()).unwrap_err().to_string();
        assert!(msg.starts_with("steps[1].ensemble.degree"), "{msg}");
        let bad = r#"{"schema_version": 9, "steps": []}"#;
        assert!(validate(&parse(bad).unwrap()).unwrap_err().to_string().contains("schema_version"));
    }

    #[test]
    fn steps_are_seed_deterministic() {
        let text = r#"{"schema_version": 1, "steps": [
            {"kind": "lambda", "ensemble": {"type": "random", "dim": 2, "degree": 4}, "t": [1, 2]}]}"#;
        let c = parse(text).unwrap();
        let a = serde_json::to_string(&certify(&c, 5).unwrap()).unwrap();
        let b = serde_json::to_string(&certify(&c, 5).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = serde_json::to_string(&certify(&c, 6).unwrap()).unwrap();
        assert_ne!(a, other);
    }
}
