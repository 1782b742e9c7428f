//! Seeded synthetic instances for experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{make_logistic_oracle, make_quadratic_oracle, ConsensusProblem, ProxOracle, SmoothOracle};
use crate::error::param_err;
use crate::Result;

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Per-node least-squares terms `||A_i x - b_i||^2` with Gaussian data.
///
/// Rows are scaled by `1/sqrt(rows)` so the curvature stays of order one.
/// With `rank_deficient` every `A_i` has rank `max(1, d/2) < d`, which makes
/// each `f_i` weakly convex (`d >= 2` required).
pub fn random_quadratic_oracles(
    n: usize,
    d: usize,
    rows: usize,
    rank_deficient: bool,
    seed: u64,
) -> Result<Vec<SmoothOracle>> {
    if n == 0 || d == 0 || rows == 0 {
        return param_err("node count, dimension and row count must be positive");
    }
    if rank_deficient && d < 2 {
        return param_err("a rank-deficient block needs d >= 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (rows as f64).sqrt();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let a = if rank_deficient {
            let r = (d / 2).max(1);
            let left = gaussian(&mut rng, rows * r);
            let right = gaussian(&mut rng, r * d);
            let mut a = vec![0.0; rows * d];
            for i in 0..rows {
                for j in 0..d {
                    a[i * d + j] = scale * (0..r).map(|k| left[i * r + k] * right[k * d + j]).sum::<f64>()
                        / (r as f64).sqrt();
                }
            }
            a
        } else {
            gaussian(&mut rng, rows * d).into_iter().map(|v| v * scale).collect()
        };
        let b: Vec<f64> = gaussian(&mut rng, rows).into_iter().map(|v| v * scale).collect();
        out.push(make_quadratic_oracle(&a, rows, d, &b)?);
    }
    Ok(out)
}

/// Least-squares consensus problem with `h_i = 0`.
pub fn random_quadratic_problem(
    n: usize,
    d: usize,
    rows: usize,
    rank_deficient: bool,
    seed: u64,
) -> Result<ConsensusProblem> {
    let smooth = random_quadratic_oracles(n, d, rows, rank_deficient, seed)?;
    ConsensusProblem::new(smooth, vec![ProxOracle::zero(d); n])
}

/// Raw labelled samples of one node: row-major features and +-1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData {
    pub features: Vec<f64>,
    pub rows: usize,
    pub labels: Vec<f64>,
}

/// Heterogeneous binary classification data.
///
/// A shared sparse ground-truth separator labels Gaussian features; each node
/// draws its features around its own random mean and flips 5% of the labels.
pub fn logistic_data(n: usize, d: usize, samples_per_node: usize, seed: u64) -> Result<Vec<NodeData>> {
    if n == 0 || d == 0 || samples_per_node == 0 {
        return param_err("node count, dimension and samples per node must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..d)
        .map(|c| if c % 2 == 0 { rng.sample::<f64, _>(StandardNormal) } else { 0.0 })
        .collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let shift: Vec<f64> = gaussian(&mut rng, d).into_iter().map(|v| 0.5 * v).collect();
        let mut features = Vec::with_capacity(samples_per_node * d);
        let mut labels = Vec::with_capacity(samples_per_node);
        for _ in 0..samples_per_node {
            let row: Vec<f64> = gaussian(&mut rng, d).iter().zip(&shift).map(|(g, s)| g + s).collect();
            let margin: f64 = row.iter().zip(&truth).map(|(a, t)| a * t).sum();
            let mut label = if margin >= 0.0 { 1.0 } else { -1.0 };
            if rng.gen_bool(0.05) {
                label = -label;
            }
            features.extend_from_slice(&row);
            labels.push(label);
        }
        out.push(NodeData { features, rows: samples_per_node, labels });
    }
    Ok(out)
}

/// Elastic-net logistic regression: ridge `lambda2` in `f_i`, `h_i = lambda1 ||x||_1`.
pub fn logistic_problem(data: &[NodeData], d: usize, lambda1: f64, lambda2: f64) -> Result<ConsensusProblem> {
    let smooth = data
        .iter()
        .map(|nd| make_logistic_oracle(&nd.features, nd.rows, d, &nd.labels, lambda2))
        .collect::<Result<Vec<_>>>()?;
    let prox = if lambda1 > 0.0 {
        vec![ProxOracle::l1(d, lambda1)?; data.len()]
    } else {
        vec![ProxOracle::zero(d); data.len()]
    };
    ConsensusProblem::new(smooth, prox)
}
