use crate::error::{dim_err, param_err};
use crate::linalg::dist;
use crate::Result;

/// Supported nonsmooth terms `h_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxKind {
    Zero,
    /// `lambda ||x||_1`.
    L1 { lambda: f64 },
    /// Indicator of the box `[lo, hi]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Indicator of the Euclidean ball around `center`.
    Ball { center: Vec<f64>, radius: f64 },
}

/// Nonsmooth local term together with its proximal map.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxOracle {
    d: usize,
    kind: ProxKind,
}

/// Componentwise soft-thresholding `sign(v) max(|v| - scale, 0)`.
pub fn prox_l1(v: &[f64], scale: f64) -> Result<Vec<f64>> {
    if !(scale > 0.0) {
        return param_err(format!("prox scale must be positive, got {scale}"));
    }
    Ok(v.iter().map(|&x| soft_threshold(x, scale)).collect())
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

impl ProxOracle {
    pub fn zero(d: usize) -> Self {
        Self { d, kind: ProxKind::Zero }
    }

    pub fn l1(d: usize, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return param_err(format!("l1 weight must be nonnegative, got {lambda}"));
        }
        Ok(Self { d, kind: ProxKind::L1 { lambda } })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return dim_err(format!("box bounds have lengths {} and {}", lo.len(), hi.len()));
        }
        if let Some(c) = (0..lo.len()).find(|&c| !(lo[c] <= hi[c])) {
            return param_err(format!("empty box in coordinate {c}: [{}, {}]", lo[c], hi[c]));
        }
        Ok(Self { d: lo.len(), kind: ProxKind::Box { lo, hi } })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return param_err(format!("ball radius must be nonnegative, got {radius}"));
        }
        Ok(Self { d: center.len(), kind: ProxKind::Ball { center, radius } })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &ProxKind {
        &self.kind
    }

    /// `prox_{scale h}(v) = argmin_y h(y) + (1/(2 scale)) ||y - v||^2`.
    pub fn prox(&self, v: &[f64], scale: f64) -> Result<Vec<f64>> {
        if !(scale > 0.0) {
            return param_err(format!("prox scale must be positive, got {scale}"));
        }
        if v.len() != self.d {
            return dim_err(format!("prox input has length {}, expected {}", v.len(), self.d));
        }
        let mut out = v.to_vec();
        self.prox_in_place(&mut out, scale);
        Ok(out)
    }

    pub(crate) fn prox_in_place(&self, v: &mut [f64], scale: f64) {
        match &self.kind {
            ProxKind::Zero => {}
            ProxKind::L1 { lambda } => {
                let t = lambda * scale;
                for x in v.iter_mut() {
                    *x = soft_threshold(*x, t);
                }
            }
            ProxKind::Box { lo, hi } => {
                for (c, x) in v.iter_mut().enumerate() {
                    *x = x.clamp(lo[c], hi[c]);
                }
            }
            ProxKind::Ball { center, radius } => {
                let r = dist(v, center);
                if r > *radius {
                    let s = radius / r;
                    for (x, c) in v.iter_mut().zip(center) {
                        *x = c + s * (*x - c);
                    }
                }
            }
        }
    }

    /// `h(x)`, with `+inf` outside the set for indicator kinds.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ProxKind::Zero => 0.0,
            ProxKind::L1 { lambda } => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            ProxKind::Box { lo, hi } => {
                let inside = x.iter().enumerate().all(|(c, &v)| {
                    v >= lo[c] - 1e-9 * (1.0 + lo[c].abs()) && v <= hi[c] + 1e-9 * (1.0 + hi[c].abs())
                });
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxKind::Ball { center, radius } => {
                if dist(x, center) <= radius + 1e-9 * (1.0 + radius) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Lipschitz constant of `h` on its domain.
    pub fn lipschitz_g(&self) -> Option<f64> {
        match &self.kind {
            ProxKind::Zero | ProxKind::Box { .. } | ProxKind::Ball { .. } => Some(0.0),
            ProxKind::L1 { lambda } => Some(lambda * (self.d as f64).sqrt()),
        }
    }
}
