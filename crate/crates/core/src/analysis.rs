//! Fixed points, a centralized reference solver, optimality-gap bounds and
//! convergence envelopes.

use nalgebra::{DMatrix, DVector};

use crate::asynchrony::DelayMetrics;
use crate::engine::RunTrace;
use crate::error::{param_err, Error};
use crate::linalg::{dist, norm, sym_pinv_solve};
use crate::mixing::MixingMatrix;
use crate::operators::{apply_full, AlgorithmKind, AlgorithmSpec};
use crate::problem::{block_max_norm, BlockVector, ConsensusProblem, ProxKind, SmoothKind};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedPointMethod {
    Iterate,
    QuadraticDirect,
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub x_star: BlockVector,
    /// `||T(x*) - x*||` in the block-max norm.
    pub residual: f64,
    pub method: FixedPointMethod,
    pub iterations: usize,
    pub converged: bool,
    /// Block average of `x*`.
    pub mean: Vec<f64>,
}

/// Iterates the synchronous map from the origin until successive iterates
/// differ by at most `tol` (block-max norm). Not converging within
/// `max_iters` is reported through `converged = false`.
pub fn fixed_point(spec: &AlgorithmSpec, tol: f64, max_iters: usize) -> Result<FixedPointResult> {
    fixed_point_from(spec, &BlockVector::zeros(spec.n(), spec.d()), tol, max_iters)
}

pub fn fixed_point_from(
    spec: &AlgorithmSpec,
    x0: &BlockVector,
    tol: f64,
    max_iters: usize,
) -> Result<FixedPointResult> {
    let mut x = x0.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        let next = apply_full(spec, &x)?;
        let step = block_max_norm(&next, &x)?;
        x = next;
        iterations += 1;
        if step <= tol {
            converged = true;
            break;
        }
    }
    let residual = block_max_norm(&apply_full(spec, &x)?, &x)?;
    let mean = x.mean_block();
    Ok(FixedPointResult { x_star: x, residual, method: FixedPointMethod::Iterate, iterations, converged, mean })
}

/// Prox-DGD fixed point of a least-squares problem without regularizers,
/// from the stacked linear system `(2 A^T A + (I - W ⊗ I)/alpha) x = 2 A^T b`
/// (block-diagonal `A`). Singular systems get the minimum-norm solution.
pub fn fixed_point_quadratic_direct(spec: &AlgorithmSpec) -> Result<FixedPointResult> {
    if spec.kind() != AlgorithmKind::ProxDgd {
        return param_err("the direct solve applies to prox_dgd only");
    }
    let p = spec.problem();
    if !p.all_h_zero() {
        return param_err("the direct solve needs h_i = 0 for every node");
    }
    let (n, d) = (spec.n(), spec.d());
    let w = spec.mixing();
    let alpha = spec.alpha();
    let mut m = DMatrix::zeros(n * d, n * d);
    let mut rhs = DVector::zeros(n * d);
    for i in 0..n {
        let SmoothKind::Quadratic { gram, atb, .. } = p.smooth(i).kind() else {
            return param_err(format!("node {i} is not a least-squares term"));
        };
        for r in 0..d {
            for c in 0..d {
                m[(i * d + r, i * d + c)] += 2.0 * gram[r * d + c];
            }
            rhs[i * d + r] = 2.0 * atb[r];
        }
        for j in 0..n {
            let coupling = if i == j { 1.0 - w.weight(i, j) } else { -w.weight(i, j) };
            if coupling != 0.0 {
                for r in 0..d {
                    m[(i * d + r, j * d + r)] += coupling / alpha;
                }
            }
        }
    }
    let sol = sym_pinv_solve(&m, &rhs, 1e-12);
    let x_star = BlockVector::new(n, d, sol.iter().copied().collect())?;
    let residual = block_max_norm(&apply_full(spec, &x_star)?, &x_star)?;
    let mean = x_star.mean_block();
    Ok(FixedPointResult {
        x_star,
        residual,
        method: FixedPointMethod::QuadraticDirect,
        iterations: 0,
        converged: true,
        mean,
    })
}

/// Prox of the network regularizer `sum_i h_i` when it has a closed form.
#[derive(Debug, Clone)]
enum Combined {
    /// `l1 ||z||_1` plus the indicator of the box `[lo, hi]` (possibly unbounded).
    Separable { l1: f64, lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Combined {
    fn from_problem(p: &ConsensusProblem) -> Result<Self> {
        let d = p.d();
        let mut l1 = 0.0;
        let mut lo = vec![f64::NEG_INFINITY; d];
        let mut hi = vec![f64::INFINITY; d];
        let mut ball: Option<(Vec<f64>, f64)> = None;
        let mut has_box = false;
        for h in p.prox_oracles() {
            match h.kind() {
                ProxKind::Zero => {}
                ProxKind::L1 { lambda } => l1 += lambda,
                ProxKind::Box { lo: l, hi: u } => {
                    has_box = true;
                    for c in 0..d {
                        lo[c] = lo[c].max(l[c]);
                        hi[c] = hi[c].min(u[c]);
                    }
                }
                ProxKind::Ball { center, radius } => match &ball {
                    None => ball = Some((center.clone(), *radius)),
                    Some((c0, r0)) if c0 == center && r0 == radius => {}
                    Some(_) => return param_err("the central solver supports at most one distinct ball constraint"),
                },
            }
        }
        if let Some((center, radius)) = ball {
            if l1 > 0.0 || has_box {
                return param_err("the central solver cannot combine a ball constraint with l1 terms or boxes");
            }
            return Ok(Combined::Ball { center, radius });
        }
        if let Some(c) = (0..d).find(|&c| lo[c] > hi[c]) {
            return param_err(format!("box constraints have an empty intersection in coordinate {c}"));
        }
        Ok(Combined::Separable { l1, lo, hi })
    }

    fn prox(&self, v: &mut [f64], t: f64) {
        match self {
            Combined::Separable { l1, lo, hi } => {
                let thr = l1 * t;
                for (c, x) in v.iter_mut().enumerate() {
                    let s = if *x > thr {
                        *x - thr
                    } else if *x < -thr {
                        *x + thr
                    } else {
                        0.0
                    };
                    *x = s.clamp(lo[c], hi[c]);
                }
            }
            Combined::Ball { center, radius } => {
                let r = dist(v, center);
                if r > *radius {
                    for (x, c) in v.iter_mut().zip(center) {
                        *x = c + (radius / r) * (*x - c);
                    }
                }
            }
        }
    }
}

/// Minimizer and optimal value of `sum_i f_i(z) + h_i(z)` over a common `z`.
#[derive(Debug, Clone)]
pub struct CentralSolution {
    pub x_opt: Vec<f64>,
    pub f_opt: f64,
    /// Norm of the prox-gradient mapping at `x_opt`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn smooth_sum(p: &ConsensusProblem, z: &[f64], grad: &mut [f64]) -> f64 {
    grad.fill(0.0);
    let mut value = 0.0;
    let mut g = vec![0.0; z.len()];
    for f in p.smooth_oracles() {
        value += f.value(z);
        g.copy_from_slice(&f.gradient(z));
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    value
}

/// Accelerated proximal gradient with backtracking and adaptive restart,
/// stopped once the prox-gradient mapping (step `1 / sum_i L_i`) has norm at
/// most `tol`. Supported regularizer combinations: any mix of l1 terms and
/// boxes, or copies of a single ball.
pub fn central_solve(p: &ConsensusProblem, tol: f64, max_iters: usize) -> Result<CentralSolution> {
    let reg = Combined::from_problem(p)?;
    let d = p.d();
    let upper = p.smoothness().iter().sum::<f64>().max(1e-12);
    let mut lip = upper / 16.0;
    let mut z = vec![0.0; d];
    reg.prox(&mut z, 1.0 / upper);
    let mut y = z.clone();
    let mut t: f64 = 1.0;
    let mut gy = vec![0.0; d];
    let mut gz = vec![0.0; d];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let prox_residual = |z: &[f64], gz: &mut [f64]| -> f64 {
        smooth_sum(p, z, gz);
        let mut step: Vec<f64> = z.iter().zip(gz.iter()).map(|(a, g)| a - g / upper).collect();
        reg.prox(&mut step, 1.0 / upper);
        dist(z, &step) * upper
    };
    while iterations < max_iters {
        residual = prox_residual(&z, &mut gz);
        if residual <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        smooth_sum(p, &y, &mut gy);
        let mut zn;
        let mut gn = vec![0.0; d];
        loop {
            zn = y.iter().zip(&gy).map(|(a, g)| a - g / lip).collect::<Vec<f64>>();
            reg.prox(&mut zn, 1.0 / lip);
            // local curvature along the step; comparing gradients avoids the
            // cancellation that function-value tests suffer near the optimum
            smooth_sum(p, &zn, &mut gn);
            let step = dist(&zn, &y);
            if lip >= upper || step == 0.0 || dist(&gn, &gy) <= lip * step {
                break;
            }
            lip = (2.0 * lip).min(upper);
        }
        let restart = zn.iter().zip(&z).zip(&y).map(|((a, b), c)| (c - a) * (a - b)).sum::<f64>() > 0.0;
        let tn = if restart { 1.0 } else { (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0 };
        let beta = if restart { 0.0 } else { (t - 1.0) / tn };
        y = zn.iter().zip(&z).map(|(a, b)| a + beta * (a - b)).collect();
        z = zn;
        t = tn;
        lip = (0.9 * lip).max(upper * 1e-6);
    }
    let f_opt = p.consensus_objective(&z)?;
    Ok(CentralSolution { x_opt: z, f_opt, residual, iterations, converged })
}

/// `min_x F(x)` over the stacked space, `sum_i min_z f_i(z) + h_i(z)`.
///
/// Least-squares nodes without regularizer are solved exactly; other nodes
/// use [`central_solve`]. Returns `None` when some node's minimization does
/// not converge (for instance an unregularized separable logistic loss).
pub fn separable_minimum(p: &ConsensusProblem, tol: f64, max_iters: usize) -> Result<Option<f64>> {
    let d = p.d();
    let mut total = 0.0;
    for i in 0..p.n() {
        let f = p.smooth(i);
        let h = p.prox(i);
        if let (SmoothKind::Quadratic { gram, atb, .. }, ProxKind::Zero) = (f.kind(), h.kind()) {
            let z = sym_pinv_solve(
                &DMatrix::from_row_slice(d, d, gram),
                &DVector::from_column_slice(atb),
                1e-12,
            );
            total += f.value(z.as_slice());
            continue;
        }
        let single = ConsensusProblem::new(vec![f.clone()], vec![h.clone()])?;
        let sol = central_solve(&single, tol, max_iters)?;
        if !sol.converged {
            return Ok(None);
        }
        total += sol.f_opt;
    }
    Ok(Some(total))
}

/// Which optimality-gap statement to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapCase {
    /// General bound `max_i ||x_i* - x_bar*|| <= sqrt(2 alpha (F_opt - min F) / (1 - beta))`.
    General,
    /// Every `f_i + h_i` is `G_i`-Lipschitz; `g` is the Lipschitz constant of
    /// the stacked `F`, `sqrt(sum_i G_i^2)`. Bound `alpha G / (1 - beta)`.
    Lipschitz { g: f64 },
    /// Identical `h_i`: `||x* - x_bar*|| <= alpha ||grad f(x*)|| / (1 - beta)` and
    /// `F(x_bar*) <= F_opt + (alpha/(1-beta) + L alpha^2/(2(1-beta)^2)) ||grad f(x*)||^2`.
    IdenticalH,
    /// DGD-ATC fixed points: same two bounds as `IdenticalH`.
    Atc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub case: GapCase,
    pub alpha: f64,
    pub beta: f64,
    /// `max_i ||x_i* - x_bar*||`.
    pub consensus_error: f64,
    /// `||x* - 1 ⊗ x_bar*||` over the stacked vector.
    pub stacked_consensus_error: f64,
    /// Bound on the stacked consensus error (it also bounds the per-node maximum).
    pub consensus_bound: Option<f64>,
    pub consensus_ok: Option<bool>,
    /// `F(x*)`.
    pub f_x_star: f64,
    pub f_opt: f64,
    /// `F(x*) <= F_opt + 1e-9`.
    pub f_x_star_ok: bool,
    /// `F(x_bar*)`, the common-decision objective at the average.
    pub f_mean: f64,
    pub f_mean_bound: Option<f64>,
    pub f_mean_ok: Option<bool>,
    pub notes: Vec<String>,
}

impl GapReport {
    /// All evaluated bounds hold.
    pub fn all_ok(&self) -> bool {
        self.f_x_star_ok && self.consensus_ok.unwrap_or(true) && self.f_mean_ok.unwrap_or(true)
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let flag = |v: Option<bool>| v.map_or("none".to_string(), |x| x.to_string());
        let mut lines = vec![
            format!("gap_case={:?}", self.case),
            format!("alpha={}", self.alpha),
            format!("beta={}", self.beta),
            format!("consensus_error={}", self.consensus_error),
            format!("stacked_consensus_error={}", self.stacked_consensus_error),
            format!("consensus_bound={}", opt(self.consensus_bound)),
            format!("consensus_ok={}", flag(self.consensus_ok)),
            format!("F_x_star={}", self.f_x_star),
            format!("F_opt={}", self.f_opt),
            format!("F_x_star_le_F_opt={}", self.f_x_star_ok),
            format!("F_mean={}", self.f_mean),
            format!("F_mean_bound={}", opt(self.f_mean_bound)),
            format!("F_mean_ok={}", flag(self.f_mean_ok)),
        ];
        for n in &self.notes {
            lines.push(format!("note={n}"));
        }
        lines.join("\n") + "\n"
    }
}

/// Evaluates the optimality-gap statement `case` at the fixed point `x_star`.
///
/// `min_f` is `min_x F(x)` (see [`separable_minimum`]) and is needed only by
/// [`GapCase::General`]; without it that bound is skipped with a note.
pub fn gap_report(
    p: &ConsensusProblem,
    w: &MixingMatrix,
    alpha: f64,
    x_star: &BlockVector,
    f_opt: f64,
    min_f: Option<f64>,
    case: GapCase,
) -> Result<GapReport> {
    let beta = w.beta();
    let mean = x_star.mean_block();
    let consensus_error = x_star.consensus_error();
    let stacked_consensus_error = (0..x_star.n())
        .map(|i| dist(x_star.block(i), &mean).powi(2))
        .sum::<f64>()
        .sqrt();
    let f_x_star = p.eval_big_f(x_star)?;
    let f_mean = p.consensus_objective(&mean)?;
    let grad_norm = norm(p.gradient(x_star)?.as_slice());
    let l_max = p.max_smoothness();
    let mut notes = Vec::new();
    let (consensus_bound, f_mean_bound) = match case {
        GapCase::General => match min_f {
            Some(m) => (Some((2.0 * alpha * (f_opt - m).max(0.0) / (1.0 - beta)).sqrt()), None),
            None => {
                notes.push("lower bound min F unavailable; general consensus bound skipped".into());
                (None, None)
            }
        },
        GapCase::Lipschitz { g } => {
            if !(g >= 0.0) {
                return param_err("the Lipschitz case needs a nonnegative constant G");
            }
            (Some(alpha * g / (1.0 - beta)), None)
        }
        GapCase::IdenticalH | GapCase::Atc => {
            if case == GapCase::IdenticalH && !p.identical_h() {
                return param_err("the identical-h bound needs identical h_i");
            }
            if case == GapCase::Atc && !p.all_h_zero() {
                return param_err("the DGD-ATC bound needs h_i = 0");
            }
            let c = alpha / (1.0 - beta) + l_max * alpha * alpha / (2.0 * (1.0 - beta).powi(2));
            (Some(alpha * grad_norm / (1.0 - beta)), Some(f_opt + c * grad_norm * grad_norm))
        }
    };
    // relative slack for rounding in the measured quantities
    let slack = |bound: f64| 1e-9 * (1.0 + bound.abs());
    Ok(GapReport {
        case,
        alpha,
        beta,
        consensus_error,
        stacked_consensus_error,
        consensus_bound,
        consensus_ok: consensus_bound.map(|b| stacked_consensus_error <= b + slack(b)),
        f_x_star,
        f_opt,
        f_x_star_ok: f_x_star <= f_opt + 1e-9,
        f_mean,
        f_mean_bound,
        f_mean_ok: f_mean_bound.map(|b| f_mean <= b + slack(b)),
        notes,
    })
}

/// Least-squares slope of `log(y)` against `log(x)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Outcome of comparing a trace with the linear-rate envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub rho: f64,
    pub period: usize,
    pub initial_distance: f64,
    /// `||x^k - x*|| <= rho^{floor(k / (B + D + 1))} ||x^0 - x*|| + 1e-9` for all `k`.
    pub period_holds: bool,
    pub period_first_violation: Option<usize>,
    /// `||x^k - x*|| <= rho^{m^k} ||x^0 - x*|| + 1e-9` for all `k`.
    pub adaptive_holds: bool,
    pub adaptive_first_violation: Option<usize>,
    /// `m^k >= floor(k / (B + D + 1))` for all `k`.
    pub adaptive_dominates: bool,
    /// Largest `||x^k - x*|| / (rho^{m^k} ||x^0 - x*||)`.
    pub max_adaptive_ratio: f64,
}

impl EnvelopeReport {
    pub fn to_text(&self) -> String {
        format!(
            "rho={}\nperiod={}\ninitial_distance={}\nperiod_envelope_holds={}\nperiod_first_violation={}\nadaptive_envelope_holds={}\nadaptive_first_violation={}\nadaptive_dominates={}\nmax_adaptive_ratio={}\n",
            self.rho,
            self.period,
            self.initial_distance,
            self.period_holds,
            self.period_first_violation.map_or("none".into(), |k| k.to_string()),
            self.adaptive_holds,
            self.adaptive_first_violation.map_or("none".into(), |k| k.to_string()),
            self.adaptive_dominates,
            self.max_adaptive_ratio
        )
    }
}

/// Checks the recorded distances against both envelopes; `(B, D)` are the
/// observed bounds in `metrics`.
pub fn envelope_check(trace: &RunTrace, rho: f64, metrics: &DelayMetrics) -> Result<EnvelopeReport> {
    let distances = trace
        .distances
        .as_ref()
        .ok_or_else(|| Error::Precondition("trace was recorded without a fixed point".into()))?;
    if metrics.m.len() < distances.len() {
        return Err(Error::Precondition(format!(
            "delay metrics cover {} iterates, trace has {}",
            metrics.m.len(),
            distances.len()
        )));
    }
    let period = metrics.observed_b + metrics.observed_d + 1;
    let d0 = distances[0];
    let mut report = EnvelopeReport {
        rho,
        period,
        initial_distance: d0,
        period_holds: true,
        period_first_violation: None,
        adaptive_holds: true,
        adaptive_first_violation: None,
        adaptive_dominates: true,
        max_adaptive_ratio: 0.0,
    };
    for (k, &dk) in distances.iter().enumerate() {
        let periodic = rho.powi((k / period) as i32) * d0;
        let adaptive = rho.powi(metrics.m[k] as i32) * d0;
        if dk > periodic + 1e-9 && report.period_holds {
            report.period_holds = false;
            report.period_first_violation = Some(k);
        }
        if dk > adaptive + 1e-9 && report.adaptive_holds {
            report.adaptive_holds = false;
            report.adaptive_first_violation = Some(k);
        }
        if metrics.m[k] < k / period {
            report.adaptive_dominates = false;
        }
        if adaptive > 0.0 {
            report.max_adaptive_ratio = report.max_adaptive_ratio.max(dk / adaptive);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{lazy_transform, metropolis_weights, Graph};
    use crate::operators::max_stepsize;
    use crate::problem::{make_quadratic_oracle, synthetic, ProxOracle, SmoothOracle};

    fn quad_spec(n: usize, d: usize, rank_deficient: bool, seed: u64, frac: f64) -> AlgorithmSpec {
        let p = synthetic::random_quadratic_problem(n, d, 2 * d, rank_deficient, seed).unwrap();
        let w = metropolis_weights(&Graph::random_connected(n, (n + 1).min(n * (n - 1) / 2), seed).unwrap()).unwrap();
        let alpha = frac * max_stepsize(AlgorithmKind::ProxDgd, &p, &w);
        AlgorithmSpec::new(AlgorithmKind::ProxDgd, p, w, alpha).unwrap()
    }

    #[test]
    fn identical_targets_give_consensus_fixed_point() {
        let n = 4;
        let f = make_quadratic_oracle(&[1.0, 0.0, 0.0, 1.0], 2, 2, &[0.5, -1.5]).unwrap();
        let p = ConsensusProblem::new(vec![f; n], vec![ProxOracle::zero(2); n]).unwrap();
        let w = metropolis_weights(&Graph::ring(n).unwrap()).unwrap();
        let spec = AlgorithmSpec::new(AlgorithmKind::ProxDgd, p, w, 0.1).unwrap();
        let r = fixed_point_quadratic_direct(&spec).unwrap();
        for i in 0..n {
            assert!(dist(r.x_star.block(i), &[0.5, -1.5]) < 1e-12);
        }
    }

    #[test]
    fn direct_and_iterative_fixed_points_agree() {
        for (seed, rd) in [(1, false), (2, true), (3, false)] {
            let spec = quad_spec(5, 4, rd, seed, 0.9);
            let direct = fixed_point_quadratic_direct(&spec).unwrap();
            assert!(direct.residual <= 1e-10, "residual {}", direct.residual);
            let iter = fixed_point(&spec, 1e-14, 500_000).unwrap();
            assert!(iter.converged && iter.residual <= 1e-9);
            assert!(block_max_norm(&direct.x_star, &iter.x_star).unwrap() <= 1e-7);
        }
    }

    #[test]
    fn direct_solve_rejects_other_problems() {
        let spec = quad_spec(3, 2, false, 1, 0.5);
        let p = ConsensusProblem::new(spec.problem().smooth_oracles().to_vec(), vec![ProxOracle::l1(2, 0.1).unwrap(); 3]).unwrap();
        let s2 = AlgorithmSpec::new(AlgorithmKind::ProxDgd, p, spec.mixing().clone(), spec.alpha()).unwrap();
        assert!(fixed_point_quadratic_direct(&s2).is_err());
    }

    #[test]
    fn pure_consensus_converges_to_average() {
        let n = 5;
        let p = ConsensusProblem::new(vec![SmoothOracle::zero(1); n], vec![ProxOracle::zero(1); n]).unwrap();
        let w = metropolis_weights(&Graph::line(n).unwrap()).unwrap();
        let spec = AlgorithmSpec::new(AlgorithmKind::ProxDgd, p, w, 1.0).unwrap();
        let x0 = BlockVector::new(n, 1, vec![1.0, 2.0, 3.0, 4.0, 10.0]).unwrap();
        let r = fixed_point_from(&spec, &x0, 1e-13, 100_000).unwrap();
        assert!(r.converged);
        for i in 0..n {
            assert!((r.x_star.block(i)[0] - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let spec = quad_spec(4, 3, false, 5, 0.5);
        let r = fixed_point(&spec, 1e-15, 3).unwrap();
        assert!(!r.converged && r.iterations == 3);
    }

    #[test]
    fn central_solve_matches_normal_equations() {
        let p = synthetic::random_quadratic_problem(4, 3, 6, false, 6).unwrap();
        let sol = central_solve(&p, 1e-11, 100_000).unwrap();
        assert!(sol.converged, "{sol:?}");
        let mut gram = DMatrix::zeros(3, 3);
        let mut rhs = DVector::zeros(3);
        for f in p.smooth_oracles() {
            if let SmoothKind::Quadratic { gram: g, atb, .. } = f.kind() {
                gram += DMatrix::from_row_slice(3, 3, g);
                rhs += DVector::from_column_slice(atb);
            }
        }
        let exact = gram.lu().solve(&rhs).unwrap();
        assert!(dist(&sol.x_opt, exact.as_slice()) < 1e-8);
    }

    #[test]
    fn central_solve_l1_with_zero_data_is_origin() {
        let f = make_quadratic_oracle(&[0.0; 6], 3, 2, &[0.0; 3]).unwrap();
        let p = ConsensusProblem::new(vec![f; 2], vec![ProxOracle::l1(2, 0.3).unwrap(); 2]).unwrap();
        let sol = central_solve(&p, 1e-12, 1000).unwrap();
        assert_eq!(sol.x_opt, vec![0.0, 0.0]);
        assert_eq!(sol.f_opt, 0.0);
    }

    #[test]
    fn central_optimum_beats_sampled_points() {
        let data = synthetic::logistic_data(4, 3, 30, 2).unwrap();
        let p = synthetic::logistic_problem(&data, 3, 0.05, 0.1).unwrap();
        let sol = central_solve(&p, 1e-10, 100_000).unwrap();
        assert!(sol.converged);
        for k in 0..50 {
            let z: Vec<f64> = (0..3).map(|c| sol.x_opt[c] + 0.01 * ((k * 7 + c * 3) % 11) as f64 - 0.05).collect();
            assert!(p.consensus_objective(&z).unwrap() >= sol.f_opt - 1e-12);
        }
    }

    #[test]
    fn central_solve_handles_boxes_and_rejects_mixed_balls() {
        let f = make_quadratic_oracle(&[1.0], 1, 1, &[5.0]).unwrap();
        let p = ConsensusProblem::new(
            vec![f.clone(), f.clone()],
            vec![ProxOracle::boxed(vec![-1.0], vec![2.0]).unwrap(), ProxOracle::boxed(vec![0.0], vec![1.5]).unwrap()],
        )
        .unwrap();
        let sol = central_solve(&p, 1e-12, 10_000).unwrap();
        assert!((sol.x_opt[0] - 1.5).abs() < 1e-12);
        let q = ConsensusProblem::new(
            vec![f.clone(), f],
            vec![ProxOracle::ball(vec![0.0], 1.0).unwrap(), ProxOracle::l1(1, 0.1).unwrap()],
        )
        .unwrap();
        assert!(central_solve(&q, 1e-10, 10).is_err());
    }

    #[test]
    fn gap_bounds_hold_on_quadratics() {
        let spec = quad_spec(6, 3, false, 8, 0.5);
        let p = spec.problem();
        let fp = fixed_point_quadratic_direct(&spec).unwrap();
        let sol = central_solve(p, 1e-11, 200_000).unwrap();
        let min_f = separable_minimum(p, 1e-11, 200_000).unwrap();
        let general = gap_report(p, spec.mixing(), spec.alpha(), &fp.x_star, sol.f_opt, min_f, GapCase::General).unwrap();
        assert!(general.all_ok(), "{general:?}");
        assert!(general.consensus_bound.is_some());
        let ident = gap_report(p, spec.mixing(), spec.alpha(), &fp.x_star, sol.f_opt, None, GapCase::IdenticalH).unwrap();
        assert!(ident.all_ok(), "{ident:?}");
        assert!(ident.to_text().contains("F_x_star_le_F_opt=true"));
    }

    #[test]
    fn atc_gap_bounds_hold() {
        let p = synthetic::random_quadratic_problem(5, 2, 4, false, 4).unwrap();
        let w = lazy_transform(&metropolis_weights(&Graph::ring(5).unwrap()).unwrap()).unwrap();
        let alpha = 0.5 * max_stepsize(AlgorithmKind::DgdAtc, &p, &w);
        let spec = AlgorithmSpec::new(AlgorithmKind::DgdAtc, p.clone(), w.clone(), alpha).unwrap();
        let fp = fixed_point(&spec, 1e-14, 1_000_000).unwrap();
        let sol = central_solve(&p, 1e-11, 100_000).unwrap();
        let r = gap_report(&p, &w, alpha, &fp.x_star, sol.f_opt, None, GapCase::Atc).unwrap();
        assert!(r.all_ok(), "{r:?}");
    }

    #[test]
    fn lipschitz_case_needs_constant() {
        let spec = quad_spec(3, 2, false, 2, 0.5);
        let x = BlockVector::zeros(3, 2);
        assert!(gap_report(spec.problem(), spec.mixing(), 0.1, &x, 0.0, None, GapCase::Lipschitz { g: f64::NAN }).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1e-3, 1e-2, 1e-1];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        assert!((loglog_slope(&xs, &ys) - 0.5).abs() < 1e-12);
    }
}
