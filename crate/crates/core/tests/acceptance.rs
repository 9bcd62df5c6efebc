//! End-to-end acceptance checks. Runs with a custom harness so every
//! criterion prints one PASS/FAIL line even when the run is captured.

use std::process::ExitCode;
use std::time::Instant;

use qtpe_core::ensemble::{
    hermitian_double, pauli_ensemble, sample_haar_set, sample_random_qtpe, square_compose, tensor_ensemble,
};
use qtpe_core::epsgood::{calibrate_haar_acceptance, is_tuple_good, tuple_paths, TupleMode};
use qtpe_core::linalg::tensor::embed;
use qtpe_core::linalg::{haar_unitary, inner};
use qtpe_core::moment::{design_error_table, subspace_closeness_report};
use qtpe_core::perm::{all_permutations, cycle_gram_matrix, factorial, fixed_point_matrix, symmetric_eigenvalues};
use qtpe_core::zigzag::{
    bound_genzigzag, bound_zigzag, g_dot, g_dot_general, zigzag, zigzag_generalised, GenBoundInput,
};
use qtpe_core::{
    moment, ComplexMatrix, FixedSpaceBasis, MomentOperator, SeededRng, SpectralMethod, SpectralOptions,
    UnitaryEnsemble, C64,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn lanczos(tol: f64) -> SpectralOptions {
    SpectralOptions::with_method(SpectralMethod::Lanczos).tol(tol)
}

fn dense() -> SpectralOptions {
    SpectralOptions::with_method(SpectralMethod::DenseSvd)
}

fn lam(e: &UnitaryEnsemble, t: usize, opts: &SpectralOptions, seed: u64) -> Result<f64, String> {
    let r = ok(moment::lambda(e, t, opts, &mut SeededRng::new(seed, 0)))?;
    ensure(r.converged, || format!("λ solver did not converge for {} at t={t}", e.label))?;
    Ok(r.lambda)
}

fn random_vec(len: usize, rng: &mut SeededRng) -> Vec<C64> {
    (0..len).map(|_| rng.complex_normal()).collect()
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

fn apply(e: &UnitaryEnsemble, t: usize, x: &[C64]) -> Result<Vec<C64>, String> {
    let phi = ok(MomentOperator::new(e, t))?;
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    phi.apply_vec(x, &mut y, false);
    Ok(y)
}

fn criterion_1() -> Outcome {
    let mut below = 0;
    let mut values = Vec::new();
    for seed in 0..5u64 {
        let e = ok(sample_random_qtpe(100, 100, &mut SeededRng::new(1000 + seed, 0)))?;
        let r = ok(moment::lambda(&e, 1, &lanczos(1e-6), &mut SeededRng::new(seed, 1)))?;
        ensure(r.converged, || format!("seed {seed}: Lanczos did not converge"))?;
        if r.lambda < 0.8 {
            below += 1;
        }
        values.push(format!("{:.4}", r.lambda));
    }
    ensure(below >= 4, || format!("only {below}/5 runs below 0.8: {values:?}"))?;
    Ok(format!("{below}/5 runs with λ < 0.8, λ = {values:?}"))
}

fn criterion_2() -> Outcome {
    let mut rng = SeededRng::new(2, 0);
    let g = ok(sample_random_qtpe(32, 8, &mut rng))?;
    let h = ok(sample_random_qtpe(8, 4, &mut rng))?;
    let z = ok(zigzag(&g, &h))?;
    ensure(z.size() == 16, || format!("member count {} != 16", z.size()))?;
    let l1 = lam(&g, 1, &lanczos(1e-9), 20)?;
    let l2 = lam(&h, 1, &dense(), 21)?;
    let lz = lam(&z, 1, &lanczos(1e-6), 22)?;
    let bound = l1 + l2 + l2 * l2;
    ensure(lz <= bound + 1e-6, || format!("λ(GⓏH) = {lz} > {bound}"))?;
    let report = bound_zigzag(l1, l2, 1, 8);
    ensure((report.value - bound).abs() < 1e-12, || "bound calculator disagrees".into())?;
    Ok(format!("λ1 = {l1:.4}, λ2 = {l2:.4}, λ(GⓏH) = {lz:.4} <= {bound:.4}, 16 members"))
}

fn criterion_3() -> Outcome {
    let mut rng = SeededRng::new(3, 0);
    let u = haar_unitary(4, &mut rng);
    let g = ok(UnitaryEnsemble::new(4, vec![u.clone(), u.adjoint()], Some(vec![1, 0])))?;
    let h = ok(sample_random_qtpe(2, 4, &mut rng))?;
    let z = ok(zigzag(&g, &h))?;
    let t = 2;

    let lz = lam(&z, t, &lanczos(1e-8), 30)?;
    ensure(lz <= 1.0 + 1e-9, || format!("λ(GⓏH) = {lz} > 1"))?;

    // Φ_Z = Φ_{1⊗H} Φ_Ġ Φ_{1⊗H}, checked on random inputs.
    let lifted = ok(UnitaryEnsemble::new(
        8,
        h.unitaries().iter().map(|v| embed(v, 4, 1).unwrap()).collect(),
        None,
    ))?;
    let gdot = ok(UnitaryEnsemble::new(8, vec![ok(g_dot(&g))?], None))?;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let x = random_vec(8usize.pow(4), &mut rng);
        let want = apply(&lifted, t, &apply(&gdot, t, &apply(&lifted, t, &x)?)?)?;
        worst = worst.max(max_diff(&apply(&z, t, &x)?, &want));
    }
    ensure(worst < 1e-9, || format!("composition identity off by {worst:e}"))?;

    let basis = ok(FixedSpaceBasis::new(8, t))?;
    let mut fixed: f64 = 0.0;
    for a in basis.alphas() {
        fixed = fixed.max(max_diff(&apply(&z, t, a)?, a));
    }
    ensure(fixed < 1e-9, || format!("fixed space moved by {fixed:e}"))?;

    // Generalised product: outer degree d = 4, d' = 2, inner ensembles on C^8.
    let g2 = ok(sample_random_qtpe(2, 4, &mut rng))?;
    let (d, dp, s) = (4, 2, 2);
    for k in [2usize, 3] {
        let hs: Vec<UnitaryEnsemble> = (0..k)
            .map(|_| sample_haar_set(d * dp, s, &mut rng).unwrap())
            .collect();
        let gz = ok(zigzag_generalised(&g2, &hs, dp))?;
        ensure(gz.size() == s.pow(k as u32), || format!("k={k}: {} members", gz.size()))?;
        ensure(gz.validate(1e-9).pass, || format!("k={k}: members not unitary"))?;
        let l = lam(&gz, 1, &dense(), 31)?;
        ensure(l <= 1.0 + 1e-9, || format!("k={k}: λ = {l} > 1"))?;
        if k == 2 {
            let gd = ok(g_dot_general(&g2, d, dp))?;
            for i2 in 0..s {
                for i1 in 0..s {
                    let want = embed(&hs[1].unitaries()[i2], 2, 1)
                        .unwrap()
                        .matmul(&gd)
                        .matmul(&embed(&hs[0].unitaries()[i1], 2, 1).unwrap());
                    let diff = gz.unitaries()[i2 * s + i1].max_abs_diff(&want);
                    ensure(diff < 1e-12, || format!("word ({i2},{i1}) off by {diff:e}"))?;
                }
            }
        }
    }

    let p = GenBoundInput {
        l1: 0.01,
        l2: 0.1,
        k: 2,
        t: 1,
        d: 100,
        dprime: 10,
        eps: 0.001,
        s: 16,
    };
    let b = bound_genzigzag(p);
    ensure((b.value - 0.246).abs() < 1e-12, || format!("gen bound {} != 0.246", b.value))?;
    let b2 = bound_genzigzag(GenBoundInput { t: 2, dprime: 100, ..p });
    let want = 0.246 + 47.0 * (2.0f64 / 10_000.0).powf(0.25);
    ensure((b2.value - want).abs() < 1e-12, || format!("gen bound {} != {want}", b2.value))?;
    let outside = bound_zigzag(0.0, 0.0, t, 2);
    ensure(!outside.hypotheses_hold(), || "d = 2 at t = 2 should violate d >= 10t^2".into())?;
    Ok(format!(
        "λ(GⓏH) = {lz:.4} at t = 2, composition {worst:.1e}, invariance {fixed:.1e}, generalised k = 2,3 ok"
    ))
}

fn criterion_4() -> Outcome {
    for (n, t) in [(3, 2), (4, 2), (3, 3)] {
        let r = ok(FixedSpaceBasis::new(n, t))?.rank();
        ensure(r as u64 == factorial(t), || format!("dim W = {r} at (n={n}, t={t})"))?;
    }
    let r = ok(FixedSpaceBasis::new(2, 3))?.rank();
    ensure(r == 5, || format!("rank {r} != 5 at (n=2, t=3)"))?;

    let mut gram_err: f64 = 0.0;
    for (n, t) in [(2, 2), (3, 2), (2, 3), (3, 3)] {
        let b = ok(FixedSpaceBasis::new(n, t))?;
        let perms = ok(all_permutations(t))?;
        for (i, p) in perms.iter().enumerate() {
            for (j, q) in perms.iter().enumerate() {
                let want = (n as f64).powi(p.inverse().compose(q).cycle_count() as i32 - t as i32);
                let got = inner(&b.alphas()[i], &b.alphas()[j]);
                gram_err = gram_err.max((got - C64::new(want, 0.0)).norm());
            }
        }
    }
    ensure(gram_err < 1e-10, || format!("Gram error {gram_err:e}"))?;

    let mut rng = SeededRng::new(4, 0);
    let mut drift: f64 = 0.0;
    for i in 0..10 {
        let (n, t) = [(2, 2), (3, 2), (2, 3)][i % 3];
        let e = ok(sample_haar_set(n, 3, &mut rng))?;
        let b = ok(FixedSpaceBasis::new(n, t))?;
        for a in b.alphas() {
            drift = drift.max(max_diff(&apply(&e, t, a)?, a));
        }
    }
    ensure(drift < 1e-9, || format!("Φ(α) drift {drift:e}"))?;
    Ok(format!("dim W = t!, rank 5 at (2,3), Gram {gram_err:.1e}, Φ(α) drift {drift:.1e}"))
}

fn row_sum_norm(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let mut cases = 0;
    for t in 2..=5usize {
        let tt = (t * (t - 1)) as f64;
        for d in t * t + 1..=64 {
            let m = ok(cycle_gram_matrix(t, d))?;
            let r = tt / d as f64;
            let norm = row_sum_norm(&m);
            ensure(norm <= r, || format!("‖M‖∞ = {norm} > {r} at t={t}, d={d}"))?;
            let k = m.nrows();
            let ev = symmetric_eigenvalues(&(m + nalgebra::DMatrix::identity(k, k)));
            ensure(ev[0] >= 1.0 - r && ev[k - 1] <= 1.0 + r, || {
                format!("eig(I+M) in [{}, {}] escapes 1 ± {r} at t={t}, d={d}", ev[0], ev[k - 1])
            })?;
            cases += 1;
        }
        for eps in [0.5 / (2.0 * t as f64), 0.9 / (2.0 * t as f64)] {
            let n = ok(fixed_point_matrix(t, eps))?;
            let norm = row_sum_norm(&n);
            let bound = 2.0 * eps * eps * (t * t) as f64;
            ensure(norm <= bound, || format!("‖N‖∞ = {norm} > {bound} at t={t}, eps={eps}"))?;
            cases += 1;
        }
    }
    Ok(format!("{cases} (t, d) and (t, eps) cases within bounds"))
}

fn criterion_6() -> Outcome {
    let mut prev: Option<[f64; 4]> = None;
    let mut summary = Vec::new();
    for d in [4, 8, 16] {
        let r = ok(subspace_closeness_report(2, d, 2))?;
        ensure(r.all_hold(), || format!("a claim fails at d={d}: {r:?}"))?;
        let vals = [r.claim1.value(), r.claim2.value(), r.claim3.value(), r.claim4.value()];
        if let Some(p) = prev {
            for (i, (a, b)) in p.iter().zip(&vals).enumerate() {
                ensure(b < a, || format!("claim {} did not decrease at d={d}: {a} -> {b}", i + 1))?;
            }
        }
        prev = Some(vals);
        summary.push(format!("d={d}: {:.3}/{:.3}", vals[0], vals[2]));
    }
    Ok(summary.join(", "))
}

fn criterion_7() -> Outcome {
    let mut rng = SeededRng::new(7, 0);
    let mut worst = [0.0f64; 4];
    let mut gap: f64 = 0.0;
    for i in 0..10 {
        let n = 2 + i % 2;
        let e = ok(sample_random_qtpe(n, 4, &mut rng))?;
        let l1 = lam(&e, 1, &dense(), 70)?;
        let l2 = lam(&e, 2, &dense(), 71)?;
        let l3 = lam(&e, 3, &dense(), 72)?;

        let sq = lam(&ok(square_compose(&e))?, 2, &dense(), 73)?;
        worst[0] = worst[0].max((sq - l2 * l2).abs());

        let dbl = lam(&hermitian_double(&e), 2, &dense(), 74)?;
        worst[1] = worst[1].max((dbl - l2).abs());

        let ten = lam(&ok(tensor_ensemble(&e))?, 1, &dense(), 75)?;
        worst[2] = worst[2].max((ten - l1).abs());

        worst[3] = worst[3].max(l1 - l2).max(l2 - l3).max(l1 - l3);

        // Sets without adjoint closure only satisfy the inequality.
        let raw = ok(sample_haar_set(n, 3, &mut rng))?;
        let lr = lam(&raw, 1, &dense(), 76)?;
        let ld = lam(&hermitian_double(&raw), 1, &dense(), 77)?;
        ensure(ld <= lr + 1e-7, || format!("doubling raised λ: {lr} -> {ld}"))?;
        gap = gap.max(lr - ld);
    }
    ensure(worst[0] <= 1e-6, || format!("squaring off by {:e}", worst[0]))?;
    ensure(worst[1] <= 1e-7, || format!("doubling off by {:e}", worst[1]))?;
    ensure(worst[2] <= 1e-7, || format!("tensoring off by {:e}", worst[2]))?;
    ensure(worst[3] <= 1e-7, || format!("tracing-out violated by {:e}", worst[3]))?;
    Ok(format!(
        "square {:.1e}, double {:.1e}, tensor {:.1e}, trace-out {:.1e}; non-Hermitian doubling drops λ by up to {gap:.3}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn instances() -> Vec<(UnitaryEnsemble, usize)> {
    let mut rng = SeededRng::new(8, 0);
    let mut out = vec![(pauli_ensemble(), 1), (pauli_ensemble(), 2)];
    for (n, ts) in [(2usize, 1..=4usize), (3, 1..=3), (4, 1..=2), (5, 2..=2)] {
        for t in ts {
            out.push((sample_random_qtpe(n, 4, &mut rng).unwrap(), t));
            out.push((sample_haar_set(n, 3, &mut rng).unwrap(), t));
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (i, (e, t)) in instances().iter().enumerate() {
        let a = lam(e, *t, &dense(), 80 + i as u64)?;
        let b = lam(e, *t, &lanczos(1e-10), 80 + i as u64)?;
        ensure((a - b).abs() <= 1e-7, || format!("{} t={t}: dense {a} vs Lanczos {b}", e.label))?;
        worst = worst.max((a - b).abs());
        count += 1;
    }
    Ok(format!("{count} instances up to ambient 729, max |Δλ| = {worst:.1e}"))
}

fn criterion_9() -> Outcome {
    let mut rng = SeededRng::new(9, 0);
    let mut ensembles = vec![pauli_ensemble()];
    for _ in 0..3 {
        ensembles.push(ok(sample_random_qtpe(2, 4, &mut rng))?);
        ensembles.push(ok(sample_haar_set(2, 3, &mut rng))?);
    }
    let mut margin = f64::INFINITY;
    for e in &ensembles {
        for t in 1..=2 {
            let l = lam(e, t, &dense(), 90)?;
            let phi = ok(MomentOperator::new(e, t))?;
            let basis = ok(FixedSpaceBasis::new(2, t))?;
            for k in 1..=3 {
                for entry in ok(design_error_table(&phi, &basis, k))? {
                    let cap = l.powi(k as i32) + 1e-9;
                    ensure(entry.error <= cap, || format!("{} t={t} k={k} {entry:?} > {cap}", e.label))?;
                    margin = margin.min(cap - entry.error);
                }
            }
        }
    }
    let pauli = pauli_ensemble();
    let phi = ok(MomentOperator::new(&pauli, 1))?;
    let basis = ok(FixedSpaceBasis::new(2, 1))?;
    for k in 1..=3 {
        let worst = ok(design_error_table(&phi, &basis, k))?
            .iter()
            .fold(0.0, |m: f64, e| m.max(e.error));
        ensure(worst <= 1e-12, || format!("Pauli design error {worst:e} at k={k}"))?;
    }
    Ok(format!("{} ensembles, smallest margin {margin:.2e}, Pauli exact", ensembles.len()))
}

/// Minimum Haar acceptance rate at `d = 2, d' = 256, eps = 0.3`, `k = 1`.
/// Fixed from a 200-trial calibration in which every trial was accepted
/// (see CALIBRATION.md).
const HAAR_ACCEPTANCE_THRESHOLD: f64 = 0.95;

fn criterion_10() -> Outcome {
    for d in 2..=4usize {
        let cap = (d as f64 - 1.0) / 3.0;
        for dp in 1..=3usize {
            for eps in [0.0, 0.01, 0.5 * cap, cap - 1e-6] {
                let us = vec![ComplexMatrix::identity(d * dp); 2];
                let r = ok(is_tuple_good(&us, d, dp, eps, TupleMode::Exhaustive))?;
                ensure(!r.good, || format!("identity tuple accepted at d={d}, d'={dp}, eps={eps}"))?;
            }
        }
    }

    let mut rng = SeededRng::new(10, 0);
    let full = tuple_paths(2, 2, 2) as u64;
    let mut verdicts = [0usize; 2];
    for trial in 0..30 {
        let us: Vec<ComplexMatrix> = (0..2).map(|_| haar_unitary(4, &mut rng)).collect();
        for eps in [0.02, 0.1, 0.3] {
            let a = ok(is_tuple_good(&us, 2, 2, eps, TupleMode::Exhaustive))?;
            let b = ok(is_tuple_good(
                &us,
                2,
                2,
                eps,
                TupleMode::Sampled {
                    budget: full,
                    seed: trial,
                },
            ))?;
            ensure(a.good == b.good && a.witness == b.witness, || {
                format!("exhaustive and full sample disagree (trial {trial}, eps {eps})")
            })?;
            verdicts[a.good as usize] += 1;
        }
    }

    let cal = ok(calibrate_haar_acceptance(2, 256, 1, 0.3, 40, 10))?;
    ensure(cal.rate >= HAAR_ACCEPTANCE_THRESHOLD, || {
        format!("Haar acceptance {} < {HAAR_ACCEPTANCE_THRESHOLD}", cal.rate)
    })?;
    Ok(format!(
        "identity tuples rejected, exhaustive = sampled on {} accept / {} reject, Haar rate {:.3} >= {HAAR_ACCEPTANCE_THRESHOLD}",
        verdicts[1], verdicts[0], cal.rate
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("random qTPE at t=1", criterion_1),
        ("zigzag bound at t=1", criterion_2),
        ("zigzag at t=2 outside hypotheses", criterion_3),
        ("fixed-space geometry", criterion_4),
        ("cycle and fixed-point matrices", criterion_5),
        ("subspace closeness", criterion_6),
        ("ensemble algebra", criterion_7),
        ("dense vs matrix-free", criterion_8),
        ("design error", criterion_9),
        ("eps-good checker", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion_{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| id.contains(p.as_str()) || name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("PASS criterion {} ({name}): {msg} [{secs:.1}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {msg} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
