//! `qtpe`: sample ensembles, build zigzag products, measure `λ` and certify
//! batches of checks from a JSON config.

mod certify;
mod failure;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qtpe_core::ensemble::{self, load, save, UnitaryEnsemble};
use qtpe_core::epsgood::{calibrate_haar_acceptance, LogBase};
use qtpe_core::linalg::spectral::dense_limit_from_env;
use qtpe_core::moment::{self, design_error_table, DesignErrorEntry};
use qtpe_core::zigzag::{self, BoundReport, GenBoundInput, GenBoundReport, ZigzagKind};
use qtpe_core::{FixedSpaceBasis, MomentOperator, SeededRng, SpectralMethod, SpectralOptions, SpectralReport};

use failure::{CliResult, Failure};
use output::emit;

#[derive(Parser)]
#[command(name = "qtpe", version, about = "Quantum tensor product expander toolkit")]
struct Cli {
    /// Root seed; every task derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Emit reports as flattened `path,value` CSV instead of JSON.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a random ensemble and write it to a file.
    Sample {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        degree: usize,
        #[arg(long, value_enum, default_value_t = SampleKind::Qtpe)]
        kind: SampleKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure λ of an ensemble file.
    Lambda {
        ensemble: PathBuf,
        #[arg(long, default_value_t = 1)]
        t: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a zigzag product of ensemble files.
    Zigzag(ZigzagArgs),
    /// Design error of every balanced monomial after `k` iterations.
    DesignError {
        ensemble: PathBuf,
        #[arg(long, default_value_t = 1)]
        t: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo acceptance rate of Haar tuples under the ε-good checker.
    CalibrateEpsgood {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 256)]
        dprime: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every step of a JSON experiment config.
    Certify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleKind {
    /// Haar unitaries closed under adjoints (even degree >= 4).
    Qtpe,
    /// Independent Haar unitaries without adjoints.
    HaarSet,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value = "auto")]
    method: SpectralMethod,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl SolverArgs {
    fn options(&self) -> SpectralOptions {
        let mut o = SpectralOptions::with_method(self.method);
        o.tol = self.tol;
        o.dense_limit = dense_limit_from_env();
        if let Some(m) = self.max_iters {
            o.max_iters = m;
        }
        o
    }
}

#[derive(Args)]
struct ZigzagArgs {
    /// Outer ensemble on `C^D` with degree `d`.
    #[arg(long)]
    g: PathBuf,
    /// Inner ensemble; repeat once per level for the generalised product.
    #[arg(long = "h", required = true)]
    h: Vec<PathBuf>,
    #[arg(long, default_value = "zigzag")]
    kind: ZigzagKind,
    /// Number of inner ensembles expected by the generalised product.
    #[arg(long)]
    k: Option<usize>,
    /// Second factor `d'` of the generalised inner space.
    #[arg(long, default_value_t = 1)]
    dprime: usize,
    #[arg(long)]
    out: PathBuf,
    /// Order at which λ values are measured and the bound evaluated.
    #[arg(long, default_value_t = 1)]
    t: usize,
    /// Measure λ of the inputs and the product.
    #[arg(long)]
    measure: bool,
    /// Known λ of the outer ensemble; skips measuring it.
    #[arg(long)]
    lambda1: Option<f64>,
    /// Known λ of the inner ensemble(s); skips measuring them.
    #[arg(long)]
    lambda2: Option<f64>,
    /// ε-goodness parameter for the generalised bound.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = LogChoice::Natural)]
    log_base: LogChoice,
    #[command(flatten)]
    solver: SolverArgs,
    /// Where to write the report; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogChoice {
    Natural,
    Two,
}

#[derive(Serialize)]
struct SampleSummary<'a> {
    path: &'a Path,
    label: &'a str,
    dim: usize,
    degree: usize,
    seed: u64,
    hermitian: bool,
}

#[derive(Serialize)]
#[serde(untagged)]
enum AnyBound {
    Plain(BoundReport),
    Generalised(GenBoundReport),
}

#[derive(Serialize)]
struct ZigzagReport {
    kind: ZigzagKind,
    path: PathBuf,
    dim: usize,
    members: usize,
    t: usize,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    lambda: Option<SpectralReport>,
    bound: Option<AnyBound>,
    /// Measured λ against the bound, when both are available.
    within_bound: Option<bool>,
}

#[derive(Serialize)]
struct DesignReport {
    label: String,
    t: usize,
    k: usize,
    lambda: f64,
    max_error: f64,
    entries: Vec<DesignErrorEntry>,
}

fn load_checked(path: &Path) -> CliResult<UnitaryEnsemble> {
    let e = load(path).map_err(|e| match e {
        qtpe_core::QtpeError::Io(io) => Failure::Io(format!("{}: {io}", path.display())),
        other => Failure::Usage(format!("{}: {other}", path.display())),
    })?;
    let v = e.validate(e.default_tol());
    if !v.pass {
        return Err(Failure::Usage(format!(
            "{}: ensemble fails validation (unitarity defect {:.3e}, involution defect {:.3e})",
            path.display(),
            v.unitarity_defect,
            v.involution_defect
        )));
    }
    Ok(e)
}

fn measure(e: &UnitaryEnsemble, t: usize, opts: &SpectralOptions, rng: SeededRng) -> CliResult<SpectralReport> {
    let mut rng = rng;
    Ok(moment::lambda(e, t, opts, &mut rng)?)
}

fn require_converged(r: &SpectralReport) -> CliResult<()> {
    if r.converged {
        Ok(())
    } else {
        Err(Failure::NoConvergence(format!(
            "{} at t = {}: residual {:.3e} after {} iterations",
            r.ensemble_label, r.t, r.residual, r.iterations
        )))
    }
}

fn cmd_sample(cli: &Cli, dim: usize, degree: usize, kind: SampleKind, out: &Path) -> CliResult<()> {
    let mut rng = SeededRng::new(cli.seed, 0);
    let e = match kind {
        SampleKind::Qtpe => ensemble::sample_random_qtpe(dim, degree, &mut rng)?,
        SampleKind::HaarSet => ensemble::sample_haar_set(dim, degree, &mut rng)?,
    };
    save(&e, out)?;
    let summary = SampleSummary {
        path: out,
        label: &e.label,
        dim: e.dim(),
        degree: e.size(),
        seed: cli.seed,
        hermitian: e.is_explicitly_hermitian(),
    };
    emit(&summary, cli.csv, None)
}

fn cmd_lambda(cli: &Cli, path: &Path, t: usize, solver: &SolverArgs, out: Option<&Path>) -> CliResult<()> {
    let e = load_checked(path)?;
    let r = measure(&e, t, &solver.options(), SeededRng::new(cli.seed, 0))?;
    emit(&r, cli.csv, out)?;
    require_converged(&r)
}

fn cmd_zigzag(cli: &Cli, a: &ZigzagArgs) -> CliResult<()> {
    let g = load_checked(&a.g)?;
    let hs = a.h.iter().map(|p| load_checked(p)).collect::<CliResult<Vec<_>>>()?;
    if a.kind != ZigzagKind::Generalised && hs.len() != 1 {
        return Err(Failure::Usage(format!("{:?} product takes one inner ensemble, got {}", a.kind, hs.len())));
    }
    if let Some(k) = a.k {
        if k != hs.len() {
            return Err(Failure::Usage(format!("--k {k} does not match the {} inner ensembles given", hs.len())));
        }
    }
    let product = match a.kind {
        ZigzagKind::Zigzag => zigzag::zigzag(&g, &hs[0])?,
        ZigzagKind::Derandomised => zigzag::zigzag_derandomised(&g, &hs[0])?,
        ZigzagKind::Generalised => zigzag::zigzag_generalised(&g, &hs, a.dprime)?,
    };
    save(&product, &a.out)?;

    let opts = a.solver.options();
    let base = SeededRng::new(cli.seed, 0);
    let mut lambda1 = a.lambda1;
    let mut lambda2 = a.lambda2;
    let mut lambda = None;
    if a.measure {
        if lambda1.is_none() {
            let r = measure(&g, a.t, &opts, base.derive(1))?;
            require_converged(&r)?;
            lambda1 = Some(r.lambda);
        }
        if lambda2.is_none() {
            let mut worst: f64 = 0.0;
            for (i, h) in hs.iter().enumerate() {
                let r = measure(h, a.t, &opts, base.derive(2 + i as u64))?;
                require_converged(&r)?;
                worst = worst.max(r.lambda);
            }
            lambda2 = Some(worst);
        }
        let r = measure(&product, a.t, &opts, base.derive(0))?;
        lambda = Some(r);
    }
    let d = g.size();
    let bound = match (lambda1, lambda2) {
        (Some(l1), Some(l2)) => Some(match a.kind {
            ZigzagKind::Zigzag => AnyBound::Plain(zigzag::bound_zigzag(l1, l2, a.t, d)),
            ZigzagKind::Derandomised => AnyBound::Plain(zigzag::bound_zigzag_derandomised(l1, l2, a.t, d)),
            ZigzagKind::Generalised => {
                let input = GenBoundInput {
                    l1,
                    l2,
                    k: hs.len(),
                    t: a.t,
                    d,
                    dprime: a.dprime,
                    eps: a.eps,
                    s: hs[0].size(),
                };
                let base = match a.log_base {
                    LogChoice::Natural => LogBase::Natural,
                    LogChoice::Two => LogBase::Two,
                };
                AnyBound::Generalised(zigzag::bound_genzigzag_report(input, base))
            }
        }),
        _ => None,
    };
    let value = bound.as_ref().map(|b| match b {
        AnyBound::Plain(b) => b.value,
        AnyBound::Generalised(b) => b.bound.value,
    });
    let within_bound = match (&lambda, value) {
        (Some(r), Some(v)) => Some(r.lambda <= v + 1e-6),
        _ => None,
    };
    let report = ZigzagReport {
        kind: a.kind,
        path: a.out.clone(),
        dim: product.dim(),
        members: product.size(),
        t: a.t,
        lambda1,
        lambda2,
        lambda,
        bound,
        within_bound,
    };
    emit(&report, cli.csv, a.report.as_deref())?;
    if let Some(r) = &report.lambda {
        require_converged(r)?;
    }
    Ok(())
}

fn cmd_design_error(cli: &Cli, path: &Path, t: usize, k: usize, out: Option<&Path>) -> CliResult<()> {
    let e = load_checked(path)?;
    let opts = SpectralOptions {
        dense_limit: dense_limit_from_env(),
        ..SpectralOptions::default()
    };
    let r = measure(&e, t, &opts, SeededRng::new(cli.seed, 0))?;
    require_converged(&r)?;
    let phi = MomentOperator::new(&e, t)?;
    let basis = FixedSpaceBasis::new(e.dim(), t)?;
    let entries = design_error_table(&phi, &basis, k)?;
    let report = DesignReport {
        label: e.label.clone(),
        t,
        k,
        lambda: r.lambda,
        max_error: entries.iter().fold(0.0, |m: f64, x| m.max(x.error)),
        entries,
    };
    emit(&report, cli.csv, out)
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Sample { dim, degree, kind, out } => cmd_sample(cli, *dim, *degree, *kind, out),
        Command::Lambda { ensemble, t, solver, out } => cmd_lambda(cli, ensemble, *t, solver, out.as_deref()),
        Command::Zigzag(a) => cmd_zigzag(cli, a),
        Command::DesignError { ensemble, t, k, out } => cmd_design_error(cli, ensemble, *t, *k, out.as_deref()),
        Command::CalibrateEpsgood {
            d,
            dprime,
            k,
            eps,
            trials,
            out,
        } => {
            let r = calibrate_haar_acceptance(*d, *dprime, *k, *eps, *trials, cli.seed)?;
            emit(&r, cli.csv, out.as_deref())
        }
        Command::Certify { config, out } => certify::run(config, cli.seed, cli.csv, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qtpe: {f}");
            f.exit_code()
        }
    }
}
