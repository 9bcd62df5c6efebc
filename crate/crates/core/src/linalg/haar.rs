use nalgebra::DMatrix;

use super::matrix::{ComplexMatrix, C64};
use super::rng::SeededRng;

/// Draws a Haar-distributed `dim x dim` unitary.
///
/// Ginibre matrix, Householder QR, then `Q * diag(r_ii / |r_ii|)` so the
/// triangular factor has a positive real diagonal. Skipping the phase
/// correction gives a non-Haar distribution.
pub fn haar_unitary(dim: usize, rng: &mut SeededRng) -> ComplexMatrix {
    assert!(dim >= 1, "haar_unitary requires dim >= 1");
    // Row-major draw order so the stream layout is independent of nalgebra's storage.
    let mut draws = Vec::with_capacity(dim * dim);
    for _ in 0..dim * dim {
        draws.push(rng.complex_normal());
    }
    let g = DMatrix::from_row_slice(dim, dim, &draws);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..dim {
        let d = r[(c, c)];
        let nd = d.norm();
        let phase = if nd > 0.0 { d / nd } else { C64::new(1.0, 0.0) };
        for row in 0..dim {
            q[(row, c)] *= phase;
        }
    }
    ComplexMatrix::from_nalgebra(&q)
}
