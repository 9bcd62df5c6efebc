//! Unitary ensembles and the algebra on them.
//!
//! An ensemble is an ordered list of `s` unitaries of side `n`, mixed with
//! uniform weight `1/s`. When it carries an involution `-` on indices with
//! `U_{-i} = U_i^†`, its moment superoperator is self-adjoint ("explicitly
//! Hermitian").

mod io;

use serde::Serialize;

pub use io::{load, save, Sidecar, MAGIC, VERSION};

use crate::error::{domain, size_limit, QtpeError, Result};
use crate::linalg::{haar_unitary, kron, ComplexMatrix, SeededRng};

/// Cap on the member count produced by squaring/tensoring/products.
pub const MAX_MEMBERS: usize = 4096;
/// Cap on `dim^2` for a single member produced by tensoring.
pub const MAX_MEMBER_ENTRIES: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryEnsemble {
    dim: usize,
    unitaries: Vec<ComplexMatrix>,
    involution: Option<Vec<usize>>,
    pub label: String,
    pub seed: Option<u64>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub dim: usize,
    pub size: usize,
    /// Members whose shape is not `dim x dim`.
    pub dimension_mismatches: usize,
    /// `max_i ‖U_i† U_i − 1‖₂`.
    pub unitarity_defect: f64,
    /// `max_i max|U_{-i} − U_i†|`, zero without an involution.
    pub involution_defect: f64,
    /// Whether the index map is a bijective involution.
    pub involution_is_bijective: bool,
    pub tol: f64,
    pub pass: bool,
}

fn check_involution(map: &[usize]) -> bool {
    map.iter().enumerate().all(|(i, &j)| j < map.len() && map[j] == i)
}

impl UnitaryEnsemble {
    /// Builds an ensemble after shape and involution-structure checks.
    /// Unitarity is left to [`UnitaryEnsemble::validate`].
    pub fn new(dim: usize, unitaries: Vec<ComplexMatrix>, involution: Option<Vec<usize>>) -> Result<Self> {
        if dim == 0 || unitaries.is_empty() {
            return Err(domain("an ensemble needs dim >= 1 and at least one member"));
        }
        for u in &unitaries {
            if u.rows() != dim || u.cols() != dim {
                return Err(QtpeError::Shape {
                    what: "ensemble member side",
                    expected: dim,
                    got: if u.rows() != dim { u.rows() } else { u.cols() },
                });
            }
        }
        if let Some(map) = &involution {
            if map.len() != unitaries.len() {
                return Err(QtpeError::Shape {
                    what: "involution length",
                    expected: unitaries.len(),
                    got: map.len(),
                });
            }
            if !check_involution(map) {
                return Err(QtpeError::Validation(
                    "involution is not a bijective involution on member indices".into(),
                ));
            }
        }
        Ok(Self {
            dim,
            unitaries,
            involution,
            label: String::new(),
            seed: None,
            provenance: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Degree `s`.
    pub fn size(&self) -> usize {
        self.unitaries.len()
    }

    pub fn unitaries(&self) -> &[ComplexMatrix] {
        &self.unitaries
    }

    pub fn involution(&self) -> Option<&[usize]> {
        self.involution.as_deref()
    }

    pub fn is_explicitly_hermitian(&self) -> bool {
        self.involution.is_some()
    }

    /// Involution if present, identity otherwise.
    pub fn involution_or_identity(&self) -> Vec<usize> {
        self.involution
            .clone()
            .unwrap_or_else(|| (0..self.size()).collect())
    }

    pub fn validate(&self, tol: f64) -> ValidationReport {
        let dimension_mismatches = self
            .unitaries
            .iter()
            .filter(|u| u.rows() != self.dim || u.cols() != self.dim)
            .count();
        let unitarity_defect = self
            .unitaries
            .iter()
            .map(ComplexMatrix::unitarity_defect)
            .fold(0.0, f64::max);
        let (involution_is_bijective, involution_defect) = match &self.involution {
            None => (true, 0.0),
            Some(map) if map.len() != self.size() || !check_involution(map) => (false, f64::INFINITY),
            Some(map) => {
                let defect = map
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| self.unitaries[j].max_abs_diff(&self.unitaries[i].adjoint()))
                    .fold(0.0, f64::max);
                (true, defect)
            }
        };
        let pass = dimension_mismatches == 0
            && involution_is_bijective
            && unitarity_defect <= tol
            && involution_defect <= tol;
        ValidationReport {
            dim: self.dim,
            size: self.size(),
            dimension_mismatches,
            unitarity_defect,
            involution_defect,
            involution_is_bijective,
            tol,
            pass,
        }
    }

    /// The default validation tolerance, `1e-10 * dim`.
    pub fn default_tol(&self) -> f64 {
        1e-10 * self.dim as f64
    }
}

/// `s/2` independent Haar unitaries followed by their adjoints, with
/// involution `-i = i + s/2 (mod s)`.
pub fn sample_random_qtpe(d: usize, s: usize, rng: &mut SeededRng) -> Result<UnitaryEnsemble> {
    if s < 4 || s % 2 != 0 {
        return Err(domain(format!("random qTPE degree must be even and >= 4, got {s}")));
    }
    if d == 0 {
        return Err(domain("random qTPE dimension must be >= 1"));
    }
    let half = s / 2;
    let mut unitaries: Vec<ComplexMatrix> = (0..half).map(|_| haar_unitary(d, rng)).collect();
    let adjoints: Vec<ComplexMatrix> = unitaries.iter().map(ComplexMatrix::adjoint).collect();
    unitaries.extend(adjoints);
    let involution = (0..s).map(|i| (i + half) % s).collect();
    let mut e = UnitaryEnsemble::new(d, unitaries, Some(involution))?
        .with_label(format!("haar(d={d},s={s})"))
        .with_provenance(format!("sample_random_qtpe seed={} stream={}", rng.seed(), rng.stream()));
    e.seed = Some(rng.seed());
    Ok(e)
}

/// Union with adjoints, duplicates kept: `{U_i} ∪ {U_i†}` of degree `2s`.
pub fn hermitian_double(e: &UnitaryEnsemble) -> UnitaryEnsemble {
    let s = e.size();
    let mut unitaries = e.unitaries.clone();
    unitaries.extend(e.unitaries.iter().map(ComplexMatrix::adjoint));
    let involution = (0..2 * s).map(|i| (i + s) % (2 * s)).collect();
    let mut out = UnitaryEnsemble::new(e.dim, unitaries, Some(involution))
        .expect("doubling preserves shapes")
        .with_label(format!("double({})", e.label))
        .with_provenance("hermitian_double");
    out.seed = e.seed;
    out
}

/// All products `U_i U_j` in row-major `(i, j)` order; no involution.
pub fn square_compose(e: &UnitaryEnsemble) -> Result<UnitaryEnsemble> {
    let s = e.size();
    if s * s > MAX_MEMBERS {
        return Err(size_limit("squared degree", s * s, MAX_MEMBERS));
    }
    let mut unitaries = Vec::with_capacity(s * s);
    for a in &e.unitaries {
        for b in &e.unitaries {
            unitaries.push(a.matmul(b));
        }
    }
    let mut out = UnitaryEnsemble::new(e.dim, unitaries, None)?
        .with_label(format!("square({})", e.label))
        .with_provenance("square_compose");
    out.seed = e.seed;
    Ok(out)
}

/// All `U_i ⊗ U_j` in row-major `(i, j)` order, on `C^{dim^2}`.
pub fn tensor_ensemble(e: &UnitaryEnsemble) -> Result<UnitaryEnsemble> {
    let s = e.size();
    if s * s > MAX_MEMBERS {
        return Err(size_limit("tensored degree", s * s, MAX_MEMBERS));
    }
    let d2 = e.dim * e.dim;
    if d2 * d2 > MAX_MEMBER_ENTRIES {
        return Err(size_limit("tensored member entries", d2 * d2, MAX_MEMBER_ENTRIES));
    }
    let mut unitaries = Vec::with_capacity(s * s);
    for a in &e.unitaries {
        for b in &e.unitaries {
            unitaries.push(kron(a, b)?);
        }
    }
    let mut out = UnitaryEnsemble::new(d2, unitaries, None)?
        .with_label(format!("tensor({})", e.label))
        .with_provenance("tensor_ensemble");
    out.seed = e.seed;
    Ok(out)
}

/// The Pauli group `{I, X, Y, Z}` on one qubit, each its own inverse.
pub fn pauli_ensemble() -> UnitaryEnsemble {
    use crate::linalg::C64;
    let (o, z, i) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0));
    let mats = vec![
        ComplexMatrix::identity(2),
        ComplexMatrix::from_vec(2, 2, vec![z, o, o, z]).unwrap(),
        ComplexMatrix::from_vec(2, 2, vec![z, -i, i, z]).unwrap(),
        ComplexMatrix::from_vec(2, 2, vec![o, z, z, -o]).unwrap(),
    ];
    UnitaryEnsemble::new(2, mats, Some(vec![0, 1, 2, 3]))
        .unwrap()
        .with_label("pauli")
}

/// `s` independent Haar unitaries, no adjoint closure and no involution.
pub fn sample_haar_set(d: usize, s: usize, rng: &mut SeededRng) -> Result<UnitaryEnsemble> {
    if d == 0 || s == 0 {
        return Err(domain("haar set needs d >= 1 and s >= 1"));
    }
    let unitaries = (0..s).map(|_| haar_unitary(d, rng)).collect();
    let mut e = UnitaryEnsemble::new(d, unitaries, None)?
        .with_label(format!("haar-set(d={d},s={s})"))
        .with_provenance(format!("sample_haar_set seed={} stream={}", rng.seed(), rng.stream()));
    e.seed = Some(rng.seed());
    Ok(e)
}
