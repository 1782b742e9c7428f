//! Experiment configuration: TOML sections mapped onto core objects.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use asyncdgd_core::asynchrony::{
    gen_best_case, gen_partial_async, gen_synchronous, gen_total_async, gen_worst_case, Schedule,
};
use asyncdgd_core::mixing::{lazy_transform, metropolis_weights, Graph, MixingMatrix};
use asyncdgd_core::operators::{max_stepsize, AlgorithmKind, AlgorithmSpec};
use asyncdgd_core::problem::synthetic::{self, NodeData};
use asyncdgd_core::problem::{make_quadratic_oracle, BlockVector, ConsensusProblem, ProxOracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub graph: GraphConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<RuntimeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Quadratic,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub loss: Loss,
    /// Number of nodes; inferred from `data` when omitted there.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    pub dim: usize,
    /// Rows per node (quadratic) or samples per node (logistic).
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// CSV with a `node` column, a target column (`label` or `target`) and `dim` feature columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub lambda1: f64,
    #[serde(default)]
    pub lambda2: f64,
    #[serde(default)]
    pub rank_deficient: bool,
}

fn default_samples() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Random,
    Ring,
    Line,
    Star,
    Complete,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    #[default]
    Metropolis,
    LazyMetropolis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: GraphKind,
    /// Edge count of a random graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub weights: WeightRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ProxDgd,
    DgdAtc,
}

impl From<Algorithm> for AlgorithmKind {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::ProxDgd => AlgorithmKind::ProxDgd,
            Algorithm::DgdAtc => AlgorithmKind::DgdAtc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `min_i w_ii / max_i L_i`.
    MinSelfWeightOverMaxL,
    /// `1 / max_i L_i`.
    InverseMaxL,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    #[default]
    Zeros,
    Random,
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub kind: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_rule: Option<StepRule>,
    #[serde(default)]
    pub start: Start,
    #[serde(default)]
    pub start_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Synchronous,
    Partial,
    Total,
    Worst,
    Best,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub regime: Regime,
    /// Number of single-node iterations `K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default = "default_growth")]
    pub growth: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

fn default_growth() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeConfig {
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
    /// Fresh neighbor messages required before an update.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Curve name used by `compare`; defaults to the config file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), stride: default_stride(), label: None }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_stride() -> usize {
    1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative data, edge and schedule paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        resolve(&mut cfg.problem.data);
        resolve(&mut cfg.graph.file);
        if let Some(s) = &mut cfg.schedule {
            resolve(&mut s.file);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces the problem, graph, schedule and start seeds.
    pub fn reseed(&mut self, seed: u64) {
        self.problem.seed = seed;
        self.graph.seed = seed;
        self.algorithm.start_seed = seed;
        if let Some(s) = &mut self.schedule {
            s.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.dim == 0 {
            bail!("problem.dim: must be positive");
        }
        if p.samples == 0 {
            bail!("problem.samples: must be positive");
        }
        if p.data.is_none() && p.nodes.is_none() {
            bail!("problem.nodes: required unless problem.data is given");
        }
        if !(p.lambda1 >= 0.0) || !(p.lambda2 >= 0.0) {
            bail!("problem.lambda1/lambda2: must be nonnegative");
        }
        if p.loss == Loss::Quadratic && p.lambda2 != 0.0 {
            bail!("problem.lambda2: only used by the logistic loss");
        }
        if p.rank_deficient && (p.loss != Loss::Quadratic || p.dim < 2) {
            bail!("problem.rank_deficient: needs the quadratic loss and dim >= 2");
        }
        let g = &self.graph;
        match g.kind {
            GraphKind::Random if g.edges.is_none() => bail!("graph.edges: required for a random graph"),
            GraphKind::File if g.file.is_none() => bail!("graph.file: required for kind = \"file\""),
            _ => {}
        }
        let a = &self.algorithm;
        let rules = [a.alpha.is_some(), a.alpha_fraction.is_some(), a.alpha_rule.is_some()];
        if rules.iter().filter(|&&r| r).count() != 1 {
            bail!("algorithm: set exactly one of alpha, alpha_fraction, alpha_rule");
        }
        if let Some(v) = a.alpha {
            if !(v > 0.0 && v.is_finite()) {
                bail!("algorithm.alpha: must be a positive number, got {v}");
            }
        }
        if let Some(f) = a.alpha_fraction {
            if !(f > 0.0 && f < 1.0) {
                bail!("algorithm.alpha_fraction: must lie in (0, 1), got {f}");
            }
        }
        match (&self.schedule, &self.runtime) {
            (Some(_), Some(_)) => bail!("schedule/runtime: give exactly one of the two sections"),
            (None, None) => bail!("schedule/runtime: one of the two sections is required"),
            (Some(s), None) => {
                if s.regime == Regime::File {
                    if s.file.is_none() {
                        bail!("schedule.file: required for regime = \"file\"");
                    }
                } else if s.horizon.is_none() {
                    bail!("schedule.horizon: required for generated schedules");
                }
                if matches!(s.regime, Regime::Partial | Regime::Worst | Regime::Best) && (s.b.is_none() || s.d.is_none()) {
                    bail!("schedule.b/schedule.d: required for regime {:?}", s.regime);
                }
                if s.regime == Regime::Total && !(s.growth > 0.0) {
                    bail!("schedule.growth: must be positive");
                }
            }
            (None, Some(r)) => {
                if r.iterations == 0 {
                    bail!("runtime.iterations: must be positive");
                }
            }
        }
        if self.output.stride == 0 {
            bail!("output.stride: must be positive");
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<ConsensusProblem> {
        let p = &self.problem;
        let prox = |n: usize| -> Result<Vec<ProxOracle>> {
            Ok(if p.lambda1 > 0.0 {
                vec![ProxOracle::l1(p.dim, p.lambda1)?; n]
            } else {
                vec![ProxOracle::zero(p.dim); n]
            })
        };
        if let Some(path) = &p.data {
            let data = read_node_csv(path, p.dim)?;
            if let Some(n) = p.nodes {
                if n != data.len() {
                    bail!("problem.nodes: {n} but {} has {} nodes", path.display(), data.len());
                }
            }
            return Ok(match p.loss {
                Loss::Logistic => synthetic::logistic_problem(&data, p.dim, p.lambda1, p.lambda2)?,
                Loss::Quadratic => {
                    let smooth = data
                        .iter()
                        .map(|nd| make_quadratic_oracle(&nd.features, nd.rows, p.dim, &nd.labels))
                        .collect::<asyncdgd_core::Result<Vec<_>>>()?;
                    ConsensusProblem::new(smooth, prox(data.len())?)?
                }
            });
        }
        let n = p.nodes.expect("validated");
        Ok(match p.loss {
            Loss::Logistic => {
                let data = synthetic::logistic_data(n, p.dim, p.samples, p.seed)?;
                synthetic::logistic_problem(&data, p.dim, p.lambda1, p.lambda2)?
            }
            Loss::Quadratic => {
                let smooth = synthetic::random_quadratic_oracles(n, p.dim, p.samples, p.rank_deficient, p.seed)?;
                ConsensusProblem::new(smooth, prox(n)?)?
            }
        })
    }

    pub fn build_graph(&self, n: usize) -> Result<Graph> {
        let g = &self.graph;
        let graph = match g.kind {
            GraphKind::Random => Graph::random_connected(n, g.edges.expect("validated"), g.seed)?,
            GraphKind::Ring => Graph::ring(n)?,
            GraphKind::Line => Graph::line(n)?,
            GraphKind::Star => Graph::star(n)?,
            GraphKind::Complete => Graph::complete(n)?,
            GraphKind::File => {
                let path = g.file.as_ref().expect("validated");
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Graph::parse_edge_list(&text)?
            }
        };
        if graph.n() != n {
            bail!("graph: has {} nodes, the problem has {n}", graph.n());
        }
        Ok(graph)
    }

    pub fn build_mixing(&self, graph: &Graph) -> Result<MixingMatrix> {
        let w = metropolis_weights(graph)?;
        Ok(match self.graph.weights {
            WeightRule::Metropolis => w,
            WeightRule::LazyMetropolis => lazy_transform(&w)?,
        })
    }

    /// Step size from the configured rule.
    pub fn resolve_alpha(&self, problem: &ConsensusProblem, w: &MixingMatrix) -> Result<f64> {
        let a = &self.algorithm;
        let l = problem.max_smoothness();
        let alpha = if let Some(v) = a.alpha {
            v
        } else if let Some(f) = a.alpha_fraction {
            let max = max_stepsize(a.kind.into(), problem, w);
            if !max.is_finite() {
                bail!("algorithm.alpha_fraction: the step bound is unbounded (all L_i = 0); give alpha instead");
            }
            f * max
        } else {
            if l == 0.0 {
                bail!("algorithm.alpha_rule: max L_i = 0; give alpha instead");
            }
            match a.alpha_rule.expect("validated") {
                StepRule::MinSelfWeightOverMaxL => {
                    w.self_weights().iter().copied().fold(f64::INFINITY, f64::min) / l
                }
                StepRule::InverseMaxL => 1.0 / l,
            }
        };
        Ok(alpha)
    }

    /// Builds the validated spec; out-of-range steps are refused unless `allow_override`.
    pub fn build_spec(&self, allow_override: bool) -> Result<(AlgorithmSpec, Graph)> {
        let problem = self.build_problem()?;
        let graph = self.build_graph(problem.n())?;
        let w = self.build_mixing(&graph)?;
        let alpha = self.resolve_alpha(&problem, &w)?;
        let kind: AlgorithmKind = self.algorithm.kind.into();
        let spec = if allow_override {
            AlgorithmSpec::with_step_override(kind, problem, w, alpha)
        } else {
            AlgorithmSpec::new(kind, problem, w, alpha)
        }
        .map_err(|e| anyhow!("algorithm: {e}"))?;
        Ok((spec, graph))
    }

    pub fn build_schedule(&self, graph: &Graph) -> Result<Schedule> {
        let s = self.schedule.as_ref().ok_or_else(|| anyhow!("schedule: section missing"))?;
        let horizon = s.horizon.unwrap_or(0);
        let (b, d) = (s.b.unwrap_or(0), s.d.unwrap_or(0));
        Ok(match s.regime {
            Regime::Synchronous => gen_synchronous(graph, horizon)?,
            Regime::Partial => gen_partial_async(graph, b, d, horizon, s.seed)?,
            Regime::Total => gen_total_async(graph, horizon, s.growth, s.seed)?,
            Regime::Worst => gen_worst_case(graph, b, d, horizon)?,
            Regime::Best => gen_best_case(graph, b, d, horizon)?,
            Regime::File => {
                let path = s.file.as_ref().expect("validated");
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Schedule::parse(&text)?
            }
        })
    }

    pub fn initial_point(&self, n: usize, d: usize) -> BlockVector {
        match self.algorithm.start {
            Start::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.algorithm.start_seed);
                BlockVector::new(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sizes match")
            }
            // a fixed-point start is filled in by the caller once x* is known
            Start::Zeros | Start::FixedPoint => BlockVector::zeros(n, d),
        }
    }
}

/// Per-node samples from a CSV with columns `node`, `label` (or `target`), then `dim` features.
fn read_node_csv(path: &Path, dim: usize) -> Result<Vec<NodeData>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let node_col = col("node").ok_or_else(|| anyhow!("{}: missing 'node' column", path.display()))?;
    let target_col = col("label")
        .or_else(|| col("target"))
        .ok_or_else(|| anyhow!("{}: missing 'label' or 'target' column", path.display()))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != node_col && c != target_col).collect();
    if feature_cols.len() != dim {
        bail!("{}: {} feature columns, problem.dim is {dim}", path.display(), feature_cols.len());
    }
    let mut nodes: Vec<NodeData> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let num = |c: usize| -> Result<f64> {
            record[c].trim().parse::<f64>().with_context(|| format!("{} row {}: bad number", path.display(), line + 2))
        };
        let node: usize = record[node_col]
            .trim()
            .parse()
            .with_context(|| format!("{} row {}: bad node id", path.display(), line + 2))?;
        while nodes.len() <= node {
            nodes.push(NodeData { features: Vec::new(), rows: 0, labels: Vec::new() });
        }
        let entry = &mut nodes[node];
        for &c in &feature_cols {
            entry.features.push(num(c)?);
        }
        entry.labels.push(num(target_col)?);
        entry.rows += 1;
    }
    if let Some(i) = nodes.iter().position(|nd| nd.rows == 0) {
        bail!("{}: node {i} has no rows", path.display());
    }
    Ok(nodes)
}
