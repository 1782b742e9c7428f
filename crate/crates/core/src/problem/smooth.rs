use nalgebra::DMatrix;

use crate::error::{dim_err, param_err};
use crate::linalg::{dot, matvec, sym_eigenvalues};
use crate::Result;

/// Concrete form of a smooth local objective.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothKind {
    Zero,
    /// `||A x - b||^2` with `A` stored row-major (`rows x d`).
    Quadratic {
        a: Vec<f64>,
        rows: usize,
        b: Vec<f64>,
        gram: Vec<f64>,
        atb: Vec<f64>,
    },
    /// Mean logistic loss plus `(lambda2/2)||x||^2`, labels in {-1, +1}.
    Logistic {
        features: Vec<f64>,
        rows: usize,
        labels: Vec<f64>,
        lambda2: f64,
    },
}

/// Smooth local objective `f_i` with its curvature constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothOracle {
    d: usize,
    kind: SmoothKind,
    smoothness: f64,
    strong_convexity: f64,
    lipschitz_g: Option<f64>,
}

impl SmoothOracle {
    pub fn zero(d: usize) -> Self {
        Self {
            d,
            kind: SmoothKind::Zero,
            smoothness: 0.0,
            strong_convexity: 0.0,
            lipschitz_g: Some(0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &SmoothKind {
        &self.kind
    }

    /// Gradient Lipschitz constant `L_i`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Strong convexity modulus `mu_i`; zero for weakly convex functions.
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    /// Lipschitz constant of the function itself, when it is globally Lipschitz.
    pub fn lipschitz_g(&self) -> Option<f64> {
        self.lipschitz_g
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SmoothKind::Zero => 0.0,
            SmoothKind::Quadratic { a, rows, b, .. } => {
                let mut r = vec![0.0; *rows];
                matvec(a, *rows, self.d, x, &mut r);
                r.iter().zip(b).map(|(ax, bi)| (ax - bi) * (ax - bi)).sum()
            }
            SmoothKind::Logistic { features, rows, labels, lambda2 } => {
                let mut loss = 0.0;
                for j in 0..*rows {
                    let row = &features[j * self.d..(j + 1) * self.d];
                    loss += softplus(-labels[j] * dot(row, x));
                }
                loss / *rows as f64 + 0.5 * lambda2 * dot(x, x)
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        self.gradient_into(x, &mut g);
        g
    }

    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            SmoothKind::Zero => out.fill(0.0),
            SmoothKind::Quadratic { gram, atb, .. } => {
                matvec(gram, self.d, self.d, x, out);
                for (o, c) in out.iter_mut().zip(atb) {
                    *o = 2.0 * (*o - c);
                }
            }
            SmoothKind::Logistic { features, rows, labels, lambda2 } => {
                out.fill(0.0);
                for j in 0..*rows {
                    let row = &features[j * self.d..(j + 1) * self.d];
                    let margin = labels[j] * dot(row, x);
                    // d/dz log(1 + e^{-z}) = -sigmoid(-z)
                    let coef = -labels[j] * sigmoid(-margin);
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += coef * a;
                    }
                }
                let m = *rows as f64;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = *o / m + lambda2 * xi;
                }
            }
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn gram_of(a: &[f64], rows: usize, d: usize, scale: f64) -> Vec<f64> {
    let mut g = vec![0.0; d * d];
    for r in 0..rows {
        let row = &a[r * d..(r + 1) * d];
        for p in 0..d {
            for q in 0..d {
                g[p * d + q] += row[p] * row[q];
            }
        }
    }
    for v in &mut g {
        *v *= scale;
    }
    g
}

fn extreme_eigenvalues(m: &[f64], d: usize) -> (f64, f64) {
    if d == 0 {
        return (0.0, 0.0);
    }
    let vals = sym_eigenvalues(&DMatrix::from_row_slice(d, d, m));
    (vals[0].max(0.0), vals[d - 1].max(0.0))
}

/// Builds `f(x) = ||A x - b||^2` from a row-major `rows x d` matrix.
///
/// `L = 2 lambda_max(A^T A)` and `mu = 2 lambda_min(A^T A)`; the latter is
/// reported as exactly zero when `A^T A` is numerically singular.
pub fn make_quadratic_oracle(a: &[f64], rows: usize, d: usize, b: &[f64]) -> Result<SmoothOracle> {
    if a.len() != rows * d {
        return dim_err(format!("matrix has {} entries, expected {rows}x{d}", a.len()));
    }
    if b.len() != rows {
        return dim_err(format!("right-hand side has length {}, expected {rows}", b.len()));
    }
    let gram = gram_of(a, rows, d, 1.0);
    let mut atb = vec![0.0; d];
    for r in 0..rows {
        for c in 0..d {
            atb[c] += a[r * d + c] * b[r];
        }
    }
    let (lmax, lmin) = extreme_eigenvalues(&gram, d);
    let lmin = if lmin <= 1e-10 * lmax.max(1e-300) { 0.0 } else { lmin };
    let lipschitz_g = if lmax == 0.0 { Some(0.0) } else { None };
    Ok(SmoothOracle {
        d,
        kind: SmoothKind::Quadratic { a: a.to_vec(), rows, b: b.to_vec(), gram, atb },
        smoothness: 2.0 * lmax,
        strong_convexity: 2.0 * lmin,
        lipschitz_g,
    })
}

/// Builds the ridge-regularized mean logistic loss from row-major features.
///
/// The smoothness constant uses the 1/4 bound on the logistic curvature:
/// `L = lambda_max((1/m) sum_j a_j a_j^T) / 4 + lambda2`, and `mu = lambda2`.
pub fn make_logistic_oracle(
    features: &[f64],
    rows: usize,
    d: usize,
    labels: &[f64],
    lambda2: f64,
) -> Result<SmoothOracle> {
    if rows == 0 {
        return param_err("logistic loss needs at least one sample");
    }
    if features.len() != rows * d {
        return dim_err(format!("feature matrix has {} entries, expected {rows}x{d}", features.len()));
    }
    if labels.len() != rows {
        return dim_err(format!("{} labels for {rows} samples", labels.len()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
        return param_err(format!("labels must be -1 or +1, got {bad}"));
    }
    if !(lambda2 >= 0.0) || !lambda2.is_finite() {
        return param_err(format!("ridge weight must be nonnegative, got {lambda2}"));
    }
    let cov = gram_of(features, rows, d, 1.0 / rows as f64);
    let (lmax, _) = extreme_eigenvalues(&cov, d);
    let mean_row_norm = (0..rows)
        .map(|j| dot(&features[j * d..(j + 1) * d], &features[j * d..(j + 1) * d]).sqrt())
        .sum::<f64>()
        / rows as f64;
    Ok(SmoothOracle {
        d,
        kind: SmoothKind::Logistic {
            features: features.to_vec(),
            rows,
            labels: labels.to_vec(),
            lambda2,
        },
        smoothness: lmax / 4.0 + lambda2,
        strong_convexity: lambda2,
        lipschitz_g: if lambda2 == 0.0 { Some(mean_row_norm) } else { None },
    })
}
