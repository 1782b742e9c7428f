//! Synchronous fixed-point maps of Prox-DGD and DGD-ATC, their per-block
//! updates, step-size bounds and contraction factors.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::mixing::MixingMatrix;
use crate::problem::{block_max_norm, BlockVector, ConsensusProblem};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    /// Mix neighbor iterates, take a local gradient step, apply the prox.
    ProxDgd,
    /// Local gradient step first (the message), then mix the messages.
    DgdAtc,
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlgorithmKind::ProxDgd => "prox_dgd",
            AlgorithmKind::DgdAtc => "dgd_atc",
        })
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prox_dgd" => Ok(AlgorithmKind::ProxDgd),
            "dgd_atc" => Ok(AlgorithmKind::DgdAtc),
            other => Err(Error::Parse(format!("unknown algorithm kind {other:?} (expected prox_dgd or dgd_atc)"))),
        }
    }
}

/// Exclusive upper bound on delay-free step-sizes.
///
/// Prox-DGD: `2 min_i w_ii / L_i`. DGD-ATC: `2 / max_i L_i`. Nodes with
/// `L_i = 0` impose no constraint, so the bound may be infinite.
pub fn max_stepsize(kind: AlgorithmKind, problem: &ConsensusProblem, mixing: &MixingMatrix) -> f64 {
    match kind {
        AlgorithmKind::ProxDgd => (0..problem.n())
            .map(|i| 2.0 * mixing.self_weight(i) / problem.smooth(i).smoothness())
            .fold(f64::INFINITY, f64::min),
        AlgorithmKind::DgdAtc => 2.0 / problem.max_smoothness(),
    }
}

/// Algorithm instance: kind, problem, averaging matrix and step-size.
#[derive(Debug, Clone)]
pub struct AlgorithmSpec {
    kind: AlgorithmKind,
    problem: ConsensusProblem,
    mixing: MixingMatrix,
    alpha: f64,
    step_override: bool,
}

impl AlgorithmSpec {
    /// Builds a spec, refusing step-sizes outside the delay-free bound.
    pub fn new(kind: AlgorithmKind, problem: ConsensusProblem, mixing: MixingMatrix, alpha: f64) -> Result<Self> {
        Self::build(kind, problem, mixing, alpha, false)
    }

    /// Like [`AlgorithmSpec::new`] but accepts any positive step-size.
    /// Structural requirements still apply; the result is marked as overridden.
    pub fn with_step_override(
        kind: AlgorithmKind,
        problem: ConsensusProblem,
        mixing: MixingMatrix,
        alpha: f64,
    ) -> Result<Self> {
        let bound = max_stepsize(kind, &problem, &mixing);
        let mut spec = Self::build(kind, problem, mixing, alpha, true)?;
        spec.step_override = !(alpha < bound);
        Ok(spec)
    }

    fn build(
        kind: AlgorithmKind,
        problem: ConsensusProblem,
        mixing: MixingMatrix,
        alpha: f64,
        allow_any_step: bool,
    ) -> Result<Self> {
        if problem.n() != mixing.n() {
            return Err(Error::Config(format!(
                "problem has {} nodes but the mixing matrix has {}",
                problem.n(),
                mixing.n()
            )));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!("step-size must be positive and finite, got {alpha}")));
        }
        if kind == AlgorithmKind::DgdAtc {
            if !mixing.positive_definite() {
                return Err(Error::Config(format!(
                    "dgd_atc needs a positive definite mixing matrix (smallest eigenvalue {})",
                    mixing.lambda_min()
                )));
            }
            if !problem.all_h_zero() {
                return Err(Error::Config("dgd_atc supports smooth problems only (all h_i zero)".into()));
            }
        }
        let bound = max_stepsize(kind, &problem, &mixing);
        if !allow_any_step && !(alpha < bound) {
            return Err(Error::Config(format!(
                "step-size {alpha} violates the {kind} bound alpha < {bound}"
            )));
        }
        Ok(Self { kind, problem, mixing, alpha, step_override: false })
    }

    pub fn kind(&self) -> AlgorithmKind {
        self.kind
    }

    pub fn problem(&self) -> &ConsensusProblem {
        &self.problem
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.problem.n()
    }

    pub fn d(&self) -> usize {
        self.problem.d()
    }

    /// True when the step-size lies outside the delay-free bound.
    pub fn step_override(&self) -> bool {
        self.step_override
    }

    pub fn max_stepsize(&self) -> f64 {
        max_stepsize(self.kind, &self.problem, &self.mixing)
    }
}

/// DGD-ATC message `y_j = x_j - alpha grad f_j(x_j)`.
pub fn adapt(spec: &AlgorithmSpec, j: usize, x_j: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x_j.len()];
    adapt_into(spec, j, x_j, &mut out);
    out
}

pub(crate) fn adapt_into(spec: &AlgorithmSpec, j: usize, x_j: &[f64], out: &mut [f64]) {
    spec.problem.smooth(j).gradient_into(x_j, out);
    for (o, x) in out.iter_mut().zip(x_j) {
        *o = x - spec.alpha * *o;
    }
}

/// Block update with inputs fetched by node id; neighbors are summed in
/// ascending id order so every engine produces identical floating point.
pub(crate) fn update_block_into<'a>(
    spec: &AlgorithmSpec,
    i: usize,
    input: impl Fn(usize) -> &'a [f64],
    self_x: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    out.fill(0.0);
    for &j in spec.mixing.closed_neighbors(i) {
        let w = spec.mixing.weight(i, j);
        for (o, v) in out.iter_mut().zip(input(j)) {
            *o += w * v;
        }
    }
    if spec.kind == AlgorithmKind::ProxDgd {
        spec.problem.smooth(i).gradient_into(self_x, scratch);
        for (o, g) in out.iter_mut().zip(scratch.iter()) {
            *o -= spec.alpha * g;
        }
        spec.problem.prox(i).prox_in_place(out, spec.alpha);
    }
}

/// One local update of node `i`.
///
/// `inputs` holds one vector per member of the closed neighborhood (ascending
/// ids, node `i` included): iterates `x_j` for Prox-DGD, messages `y_j` for
/// DGD-ATC. Prox-DGD takes the gradient at `self_x`; DGD-ATC ignores it.
pub fn apply_block(spec: &AlgorithmSpec, i: usize, inputs: &[Vec<f64>], self_x: &[f64]) -> Result<Vec<f64>> {
    if i >= spec.n() {
        return Err(Error::Protocol(format!("node {i} does not exist")));
    }
    let closed = spec.mixing.closed_neighbors(i);
    if inputs.len() != closed.len() {
        return Err(Error::Protocol(format!(
            "node {i} needs {} inputs (closed neighborhood {closed:?}), got {}",
            closed.len(),
            inputs.len()
        )));
    }
    let d = spec.d();
    if inputs.iter().any(|v| v.len() != d) || self_x.len() != d {
        return Err(Error::Dimension(format!("block inputs must have length {d}")));
    }
    let lookup = |j: usize| -> &[f64] {
        let pos = closed.binary_search(&j).expect("closed neighbor");
        inputs[pos].as_slice()
    };
    let mut out = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    update_block_into(spec, i, lookup, self_x, &mut out, &mut scratch);
    Ok(out)
}

/// Synchronous map: `prox_{alpha h}(W x - alpha grad f(x))` or `W (x - alpha grad f(x))`.
pub fn apply_full(spec: &AlgorithmSpec, x: &BlockVector) -> Result<BlockVector> {
    if x.n() != spec.n() || x.d() != spec.d() {
        return Err(Error::Dimension(format!(
            "iterate shape ({}, {}) does not match ({}, {})",
            x.n(),
            x.d(),
            spec.n(),
            spec.d()
        )));
    }
    let (n, d) = (spec.n(), spec.d());
    let source = match spec.kind {
        AlgorithmKind::ProxDgd => x.clone(),
        AlgorithmKind::DgdAtc => {
            let mut y = BlockVector::zeros(n, d);
            for j in 0..n {
                adapt_into(spec, j, x.block(j), y.block_mut(j));
            }
            y
        }
    };
    let mut out = BlockVector::zeros(n, d);
    let mut scratch = vec![0.0; d];
    for i in 0..n {
        let mut block = vec![0.0; d];
        update_block_into(spec, i, |j| source.block(j), x.block(i), &mut block, &mut scratch);
        out.block_mut(i).copy_from_slice(&block);
    }
    Ok(out)
}

/// Block-max contraction factor toward the fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub kind: AlgorithmKind,
    /// `rho` for Prox-DGD, `rho_hat` for DGD-ATC; `1` when not valid.
    pub factor: f64,
    pub per_node: Vec<f64>,
    /// Requires every `mu_i > 0` and a step-size inside the bound.
    pub valid: bool,
}

/// `rho = sqrt(1 - alpha min_i mu_i (2 - alpha L_i / w_ii))` for Prox-DGD and
/// `rho_hat = sqrt(1 - alpha min_i mu_i (2 - alpha L_i))` for DGD-ATC.
pub fn contraction_factor(spec: &AlgorithmSpec) -> ContractionReport {
    let alpha = spec.alpha;
    let per_node: Vec<f64> = (0..spec.n())
        .map(|i| {
            let f = spec.problem.smooth(i);
            let curvature = match spec.kind {
                AlgorithmKind::ProxDgd => alpha * f.smoothness() / spec.mixing.self_weight(i),
                AlgorithmKind::DgdAtc => alpha * f.smoothness(),
            };
            (1.0 - alpha * f.strong_convexity() * (2.0 - curvature)).max(0.0).sqrt()
        })
        .collect();
    let strongly_convex = spec.problem.strong_convexity().iter().all(|&m| m > 0.0);
    let valid = strongly_convex && !spec.step_override;
    let factor = if valid { per_node.iter().copied().fold(0.0, f64::max) } else { 1.0 };
    ContractionReport { kind: spec.kind, factor, per_node, valid }
}

/// Largest sampled ratio `||T(x) - x*|| / ||x - x*||` in the block-max norm.
///
/// Perturbations mix full random directions, a random subset of blocks,
/// a single block and consensus directions, at scales in `[0.1, 10]`.
pub fn measure_pseudo_contraction(
    spec: &AlgorithmSpec,
    x_star: &BlockVector,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let residual = block_max_norm(&apply_full(spec, x_star)?, x_star)?;
    if residual > 1e-10 {
        return Err(Error::Precondition(format!(
            "x_star is not a fixed point: residual {residual:e} > 1e-10"
        )));
    }
    let (n, d) = (spec.n(), spec.d());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for s in 0..samples {
        let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
        let mut x = x_star.clone();
        match s % 4 {
            0 => {
                for i in 0..n {
                    perturb(x.block_mut(i), &mut rng, scale);
                }
            }
            1 => {
                for i in 0..n {
                    if rng.gen_bool(0.5) {
                        perturb(x.block_mut(i), &mut rng, scale);
                    }
                }
            }
            2 => {
                let i = rng.gen_range(0..n);
                perturb(x.block_mut(i), &mut rng, scale);
            }
            _ => {
                let dir: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                for i in 0..n {
                    for (v, u) in x.block_mut(i).iter_mut().zip(&dir) {
                        *v += u;
                    }
                }
            }
        }
        let denom = block_max_norm(&x, x_star)?;
        if denom == 0.0 {
            continue;
        }
        let ratio = block_max_norm(&apply_full(spec, &x)?, x_star)? / denom;
        worst = worst.max(ratio);
    }
    Ok(worst)
}

fn perturb(block: &mut [f64], rng: &mut ChaCha8Rng, scale: f64) {
    for v in block {
        *v += scale * rng.sample::<f64, _>(StandardNormal);
    }
}
