//! Small dense helpers shared by the numeric modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Eigenvalues of a symmetric matrix, largest first.
pub(crate) fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// Minimum-norm solution of `m x = rhs` for symmetric positive semidefinite `m`.
///
/// Eigenvalues below `rel_cutoff * max|lambda|` are treated as zero.
pub(crate) fn sym_pinv_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, rel_cutoff: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cutoff = rel_cutoff * scale.max(f64::MIN_POSITIVE);
    let coeffs = eig.eigenvectors.transpose() * rhs;
    let mut scaled = DVector::zeros(coeffs.len());
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > cutoff {
            scaled[i] = coeffs[i] / lam;
        }
    }
    &eig.eigenvectors * scaled
}

/// `out = m v` for a row-major `rows x cols` matrix.
pub(crate) fn matvec(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        out[r] = dot(row, v);
    }
}
