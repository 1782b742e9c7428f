//! Consensus problems: stacked iterates, smooth oracles and proximal oracles.
//!
//! Every node `i` owns a smooth term `f_i` and a (possibly nonsmooth) term
//! `h_i`. The network objective at a stacked point is
//! `F(x) = sum_i f_i(x_i) + h_i(x_i)`.

mod prox;
mod smooth;
pub mod synthetic;

pub use prox::{prox_l1, ProxKind, ProxOracle};
pub use smooth::{make_logistic_oracle, make_quadratic_oracle, SmoothKind, SmoothOracle};

use crate::error::{dim_err, param_err};
use crate::Result;

/// Stacked iterate `x = (x_1, ..., x_n)` with `x_i` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return dim_err(format!(
                "block vector with n={n}, d={d} needs {} scalars, got {}",
                n * d,
                data.len()
            ));
        }
        Ok(Self { n, d, data })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![0.0; n * d] }
    }

    /// Stacks `n` copies of `z`.
    pub fn consensus(n: usize, z: &[f64]) -> Self {
        let d = z.len();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(z);
        }
        Self { n, d, data }
    }

    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let n = blocks.len();
        let d = blocks.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for (i, b) in blocks.iter().enumerate() {
            if b.len() != d {
                return dim_err(format!("block {i} has length {}, expected {d}", b.len()));
            }
            data.extend_from_slice(b);
        }
        Ok(Self { n, d, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Average of the blocks, `x_bar = (1/n) sum_i x_i`.
    pub fn mean_block(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for i in 0..self.n {
            for (m, v) in mean.iter_mut().zip(self.block(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= self.n as f64;
        }
        mean
    }

    /// `max_i ||x_i - x_bar||`.
    pub fn consensus_error(&self) -> f64 {
        let mean = self.mean_block();
        (0..self.n)
            .map(|i| crate::linalg::dist(self.block(i), &mean))
            .fold(0.0, f64::max)
    }

    /// `max_i ||x_i||`.
    pub fn block_max(&self) -> f64 {
        (0..self.n)
            .map(|i| crate::linalg::norm(self.block(i)))
            .fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.d != other.d {
            return dim_err(format!(
                "shapes ({}, {}) and ({}, {}) differ",
                self.n, self.d, other.n, other.d
            ));
        }
        Ok(())
    }
}

/// Block-wise maximum norm of `x - y`: `max_i ||x_i - y_i||_2`.
pub fn block_max_norm(x: &BlockVector, y: &BlockVector) -> Result<f64> {
    x.same_shape(y)?;
    Ok((0..x.n)
        .map(|i| crate::linalg::dist(x.block(i), y.block(i)))
        .fold(0.0, f64::max))
}

/// Per-node oracles of a consensus optimization problem.
#[derive(Debug, Clone)]
pub struct ConsensusProblem {
    n: usize,
    d: usize,
    smooth: Vec<SmoothOracle>,
    prox: Vec<ProxOracle>,
    identical_h: bool,
}

impl ConsensusProblem {
    pub fn new(smooth: Vec<SmoothOracle>, prox: Vec<ProxOracle>) -> Result<Self> {
        let n = smooth.len();
        if n == 0 {
            return param_err("a consensus problem needs at least one node");
        }
        if prox.len() != n {
            return dim_err(format!("{n} smooth oracles but {} prox oracles", prox.len()));
        }
        let d = smooth[0].dim();
        for (i, (f, h)) in smooth.iter().zip(&prox).enumerate() {
            if f.dim() != d || h.dim() != d {
                return dim_err(format!(
                    "node {i}: oracle dimensions ({}, {}) differ from {d}",
                    f.dim(),
                    h.dim()
                ));
            }
        }
        let identical_h = prox.windows(2).all(|w| w[0] == w[1]);
        Ok(Self { n, d, smooth, prox, identical_h })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn smooth(&self, i: usize) -> &SmoothOracle {
        &self.smooth[i]
    }

    pub fn prox(&self, i: usize) -> &ProxOracle {
        &self.prox[i]
    }

    pub fn smooth_oracles(&self) -> &[SmoothOracle] {
        &self.smooth
    }

    pub fn prox_oracles(&self) -> &[ProxOracle] {
        &self.prox
    }

    /// True when every `h_i` has the same kind and parameters.
    pub fn identical_h(&self) -> bool {
        self.identical_h
    }

    pub fn all_h_zero(&self) -> bool {
        self.prox.iter().all(|h| matches!(h.kind(), ProxKind::Zero))
    }

    pub fn smoothness(&self) -> Vec<f64> {
        self.smooth.iter().map(SmoothOracle::smoothness).collect()
    }

    pub fn strong_convexity(&self) -> Vec<f64> {
        self.smooth.iter().map(SmoothOracle::strong_convexity).collect()
    }

    pub fn max_smoothness(&self) -> f64 {
        self.smooth.iter().map(SmoothOracle::smoothness).fold(0.0, f64::max)
    }

    fn check_shape(&self, x: &BlockVector) -> Result<()> {
        if x.n() != self.n || x.d() != self.d {
            return dim_err(format!(
                "iterate shape ({}, {}) does not match problem ({}, {})",
                x.n(),
                x.d(),
                self.n,
                self.d
            ));
        }
        Ok(())
    }

    /// `f(x) = sum_i f_i(x_i)`.
    pub fn eval_f(&self, x: &BlockVector) -> Result<f64> {
        self.check_shape(x)?;
        Ok((0..self.n).map(|i| self.smooth[i].value(x.block(i))).sum())
    }

    /// `F(x) = sum_i f_i(x_i) + h_i(x_i)`, `+inf` outside the domain of some `h_i`.
    pub fn eval_big_f(&self, x: &BlockVector) -> Result<f64> {
        self.check_shape(x)?;
        let mut total = 0.0;
        for i in 0..self.n {
            total += self.smooth[i].value(x.block(i)) + self.prox[i].value(x.block(i));
        }
        Ok(total)
    }

    /// Stacked gradient `(grad f_1(x_1), ..., grad f_n(x_n))`.
    pub fn gradient(&self, x: &BlockVector) -> Result<BlockVector> {
        self.check_shape(x)?;
        let mut g = BlockVector::zeros(self.n, self.d);
        for i in 0..self.n {
            self.smooth[i].gradient_into(x.block(i), g.block_mut(i));
        }
        Ok(g)
    }

    /// Objective of the common-decision problem, `sum_i f_i(z) + h_i(z)`.
    pub fn consensus_objective(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.d {
            return dim_err(format!("point has length {}, expected {}", z.len(), self.d));
        }
        Ok((0..self.n)
            .map(|i| self.smooth[i].value(z) + self.prox[i].value(z))
            .sum())
    }
}
