//! Execution schedules and delay analytics.
//!
//! Iterations are indexed globally: exactly one node updates per iteration
//! `k`, producing `x^{k+1}` from `x^k`. Node `i(k)` reads block `j` of the
//! iterate `x^{s}` with `s = s_ij^k <= k`, and always uses its own current
//! block (`s_ii^k = k`). A negative stale index stands for information older
//! than the start of the run; its value is the initial block `x_j^0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Error};
use crate::mixing::Graph;
use crate::Result;

/// One global iteration: the active node and the stale index of every
/// neighbor read, aligned with the node's (ascending) open neighborhood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub node: usize,
    pub stale: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    neighbors: Vec<Vec<usize>>,
    steps: Vec<Step>,
    round_length: Option<usize>,
}

impl Schedule {
    pub fn new(neighbors: Vec<Vec<usize>>, steps: Vec<Step>, round_length: Option<usize>) -> Result<Self> {
        let n = neighbors.len();
        for (i, list) in neighbors.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) || list.iter().any(|&j| j >= n || j == i) {
                return Err(Error::Schedule(format!("neighbor list of node {i} is not a sorted open neighborhood")));
            }
        }
        for (k, step) in steps.iter().enumerate() {
            if step.node >= n {
                return Err(Error::Schedule(format!("iteration {k}: node {} out of range", step.node)));
            }
            if step.stale.len() != neighbors[step.node].len() {
                return Err(Error::Schedule(format!(
                    "iteration {k}: node {} has {} neighbors but {} stale indices",
                    step.node,
                    neighbors[step.node].len(),
                    step.stale.len()
                )));
            }
            if let Some(&s) = step.stale.iter().find(|&&s| s > k as i64) {
                return Err(Error::Schedule(format!("iteration {k}: stale index {s} lies in the future")));
            }
        }
        Ok(Self { neighbors, steps, round_length })
    }

    pub fn for_graph(graph: &Graph, steps: Vec<Step>, round_length: Option<usize>) -> Result<Self> {
        let neighbors = (0..graph.n()).map(|i| graph.neighbors(i).to_vec()).collect();
        Self::new(neighbors, steps, round_length)
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// Number of iterations `K`.
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Set for synchronous schedules: the number of iterations per round.
    pub fn round_length(&self) -> Option<usize> {
        self.round_length
    }

    /// First `k` iterations.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            neighbors: self.neighbors.clone(),
            steps: self.steps[..k.min(self.steps.len())].to_vec(),
            round_length: self.round_length,
        }
    }

    /// Header lines, then one `k i s_1 s_2 ...` line per iteration.
    pub fn to_text(&self) -> String {
        let mut s = format!("# nodes {}\n", self.n());
        if let Some(r) = self.round_length {
            let _ = writeln!(s, "# round_length {r}");
        }
        for (i, list) in self.neighbors.iter().enumerate() {
            let _ = write!(s, "# neighbors {i}:");
            for j in list {
                let _ = write!(s, " {j}");
            }
            s.push('\n');
        }
        for (k, step) in self.steps.iter().enumerate() {
            let _ = write!(s, "{k} {}", step.node);
            for v in &step.stale {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse(format!("schedule line {}: {msg}", line + 1));
        let mut n = None;
        let mut round_length = None;
        let mut neighbors: Vec<Option<Vec<usize>>> = Vec::new();
        let mut steps = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("nodes") {
                    let count: usize = v.trim().parse().map_err(|_| err(lineno, "bad node count"))?;
                    n = Some(count);
                    neighbors = vec![None; count];
                } else if let Some(v) = rest.strip_prefix("round_length") {
                    round_length = Some(v.trim().parse().map_err(|_| err(lineno, "bad round length"))?);
                } else if let Some(v) = rest.strip_prefix("neighbors") {
                    let (head, tail) = v.split_once(':').ok_or_else(|| err(lineno, "missing ':'"))?;
                    let i: usize = head.trim().parse().map_err(|_| err(lineno, "bad node id"))?;
                    let list = tail
                        .split_whitespace()
                        .map(|t| t.parse::<usize>().map_err(|_| err(lineno, "bad neighbor id")))
                        .collect::<Result<Vec<_>>>()?;
                    let slot = neighbors.get_mut(i).ok_or_else(|| err(lineno, "neighbor list before node count or out of range"))?;
                    *slot = Some(list);
                }
                continue;
            }
            let mut it = line.split_whitespace();
            let k: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| err(lineno, "bad iteration index"))?;
            if k != steps.len() {
                return Err(err(lineno, &format!("expected iteration {}, found {k}", steps.len())));
            }
            let node: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| err(lineno, "bad node id"))?;
            let stale = it
                .map(|t| t.parse::<i64>().map_err(|_| err(lineno, "bad stale index")))
                .collect::<Result<Vec<_>>>()?;
            steps.push(Step { node, stale });
        }
        if n.is_none() {
            return Err(Error::Parse("schedule is missing the '# nodes' header".into()));
        }
        let neighbors = neighbors
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::Parse(format!("schedule is missing the neighbor list of node {i}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(neighbors, steps, round_length)
    }
}

/// Round-robin rounds: node `p` updates at `r n + p` and reads the round-start iterate `x^{r n}`.
pub fn gen_synchronous(graph: &Graph, horizon: usize) -> Result<Schedule> {
    let n = graph.n();
    if horizon % n != 0 {
        return param_err(format!("synchronous horizon {horizon} must be a multiple of n = {n}"));
    }
    let steps = (0..horizon)
        .map(|k| {
            let node = k % n;
            let start = (k - node) as i64;
            Step { node, stale: vec![start; graph.degree(node)] }
        })
        .collect();
    Schedule::for_graph(graph, steps, Some(n))
}

fn check_gap_bound(n: usize, b: usize) -> Result<()> {
    if b + 1 < n {
        return param_err(format!(
            "B = {b} is infeasible: with one update per iteration, {n} nodes need windows of at least n = {n} iterations, so B >= n - 1 = {}",
            n - 1
        ));
    }
    Ok(())
}

/// Deadline bookkeeping: node `i` must update at or before `deadline[i]`.
struct Deadlines {
    deadline: Vec<usize>,
}

impl Deadlines {
    fn new(n: usize, first: usize) -> Self {
        Self { deadline: vec![first; n] }
    }

    /// Whether unit jobs at slots `k+1, k+2, ...` can still meet every deadline
    /// after `chosen` updates at slot `k` with new deadline `new_deadline`.
    fn feasible_after(&self, k: usize, chosen: usize, new_deadline: usize) -> bool {
        let mut ds: Vec<usize> = self
            .deadline
            .iter()
            .enumerate()
            .map(|(i, &d)| if i == chosen { new_deadline } else { d })
            .collect();
        ds.sort_unstable();
        ds.iter().enumerate().all(|(pos, &d)| d >= k + 1 + pos)
    }

    /// Earliest deadline, lowest id on ties.
    fn most_urgent(&self) -> usize {
        (0..self.deadline.len()).min_by_key(|&i| (self.deadline[i], i)).unwrap()
    }
}

fn random_activation(rng: &mut ChaCha8Rng, dl: &Deadlines, k: usize, next_gap: usize) -> usize {
    let n = dl.deadline.len();
    let candidate = rng.gen_range(0..n);
    if dl.deadline[candidate] >= k && dl.feasible_after(k, candidate, k + next_gap) {
        candidate
    } else {
        dl.most_urgent()
    }
}

/// Random schedule satisfying: every node updates in each window
/// `{k, ..., k + B}`, and every read satisfies `k - D <= s <= k`.
///
/// Activations are uniform unless some node is about to miss its window, in
/// which case the most urgent node goes first. Stale indices are uniform in
/// `[max(0, k - D), k]`.
pub fn gen_partial_async(graph: &Graph, b: usize, d: usize, horizon: usize, seed: u64) -> Result<Schedule> {
    let n = graph.n();
    check_gap_bound(n, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dl = Deadlines::new(n, b);
    let mut steps = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let node = random_activation(&mut rng, &dl, k, b + 1);
        dl.deadline[node] = k + b + 1;
        let lo = k.saturating_sub(d) as i64;
        let stale = (0..graph.degree(node)).map(|_| rng.gen_range(lo..=k as i64)).collect();
        steps.push(Step { node, stale });
    }
    Schedule::for_graph(graph, steps, None)
}

/// Window multiplier `max(1, ceil(growth (1 + ln(1 + k))))` of the total-asynchrony generator.
pub fn total_async_window(growth: f64, k: usize) -> usize {
    ((growth * (1.0 + (1.0 + k as f64).ln())).ceil() as usize).max(1)
}

/// Schedule with unbounded but slowly growing gaps and delays.
///
/// A node that updates at `k` must update again within `W_k n` iterations,
/// `W_k = total_async_window(growth, k)`; delays are uniform in
/// `[0, floor(growth n (1 + ln(1 + k)))]`. Every node therefore updates
/// infinitely often and `s_ij^k -> infinity`. Generation never looks at the
/// horizon, so longer horizons extend shorter ones.
pub fn gen_total_async(graph: &Graph, horizon: usize, growth: f64, seed: u64) -> Result<Schedule> {
    if !(growth > 0.0) || !growth.is_finite() {
        return param_err(format!("growth must be positive, got {growth}"));
    }
    let n = graph.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dl = Deadlines::new(n, n - 1);
    let mut steps = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let gap = total_async_window(growth, k) * n;
        let node = random_activation(&mut rng, &dl, k, gap);
        dl.deadline[node] = k + gap;
        let max_delay = (growth * n as f64 * (1.0 + (1.0 + k as f64).ln())).floor() as usize;
        let stale = (0..graph.degree(node))
            .map(|_| k.saturating_sub(rng.gen_range(0..=max_delay)) as i64)
            .collect();
        steps.push(Step { node, stale });
    }
    Schedule::for_graph(graph, steps, None)
}

/// Schedule whose epochs are exactly `k^m = m (B + D + 1)`.
///
/// Node 0 updates at `m P + D - 1` reading every neighbor with delay exactly
/// `D`, and at `(m + 1) P - 1` with fresh reads (`P = B + D + 1`). Extra fresh
/// updates of node 0 are inserted wherever its idle run would exceed `B`;
/// the remaining nodes fill the other slots earliest-deadline-first with
/// fresh reads.
///
/// With `B = n - 1` the update order is forced to be cyclic; then every read
/// is delayed by exactly `D` instead, which gives the same epochs.
pub fn gen_worst_case(graph: &Graph, b: usize, d: usize, horizon: usize) -> Result<Schedule> {
    let n = graph.n();
    check_gap_bound(n, b)?;
    if b + 1 == n {
        let steps = (0..horizon)
            .map(|k| Step { node: k % n, stale: vec![k as i64 - d as i64; graph.degree(k % n)] })
            .collect();
        return Schedule::for_graph(graph, steps, None);
    }
    let p = b + d + 1;
    let mut owner: Vec<Option<usize>> = vec![None; horizon];
    let mut delayed = vec![false; horizon];
    let mut required = Vec::new();
    let mut m = 0;
    while m * p < horizon + p {
        if d >= 1 || m >= 1 {
            required.push(((m * p + d) as i64 - 1, true));
        }
        required.push((((m + 1) * p) as i64 - 1, false));
        m += 1;
    }
    required.retain(|&(k, _)| k >= 0);
    required.sort_unstable();
    required.dedup_by_key(|e| e.0);
    let mut prev: i64 = -1;
    let mut mark = |k: i64, is_delayed: bool, owner: &mut Vec<Option<usize>>| {
        if (k as usize) < horizon {
            owner[k as usize] = Some(0);
            delayed[k as usize] = is_delayed;
        }
    };
    for &(k, is_delayed) in &required {
        while k - prev - 1 > b as i64 {
            prev += b as i64 + 1;
            mark(prev, false, &mut owner);
        }
        mark(k, is_delayed, &mut owner);
        prev = k;
    }
    let mut dl = Deadlines::new(n, b);
    dl.deadline[0] = usize::MAX;
    let mut steps = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let node = match owner[k] {
            Some(i) => i,
            None => {
                let i = (1..n).min_by_key(|&i| (dl.deadline[i], i)).unwrap();
                dl.deadline[i] = k + b + 1;
                i
            }
        };
        if let Some(late) = (1..n).find(|&i| dl.deadline[i] <= k) {
            return param_err(format!(
                "worst-case construction is infeasible for n = {n}, B = {b}, D = {d}: node {late} misses its window at iteration {k}"
            ));
        }
        let s = if delayed[k] { k as i64 - d as i64 } else { k as i64 };
        steps.push(Step { node, stale: vec![s; graph.degree(node)] });
    }
    Schedule::for_graph(graph, steps, None)
}

/// Schedule that realizes `(B, D)` exactly once and is delay-free afterwards.
///
/// Nodes `1..n` cycle through iterations `0..B`; node 0 first updates at `B`
/// reading with delay `D`; from then on the least recently updated node goes
/// next (plain round-robin) with fresh reads.
pub fn gen_best_case(graph: &Graph, b: usize, d: usize, horizon: usize) -> Result<Schedule> {
    let n = graph.n();
    check_gap_bound(n, b)?;
    let mut last: Vec<i64> = vec![-1; n];
    let mut steps = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let (node, s) = if k < b {
            (1 + k % (n - 1), k as i64)
        } else if k == b {
            (0, b as i64 - d as i64)
        } else {
            ((0..n).min_by_key(|&i| (last[i], i)).unwrap(), k as i64)
        };
        last[node] = k as i64;
        steps.push(Step { node, stale: vec![s; graph.degree(node)] });
    }
    Schedule::for_graph(graph, steps, None)
}

/// Smallest `(B, D)` a finite schedule satisfies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialAsyncReport {
    /// False when some node never updates within the horizon.
    pub holds: bool,
    /// Longest run of consecutive iterations in which some node stays idle.
    pub b_min: usize,
    /// Largest read delay `k - s_ij^k`.
    pub d_min: usize,
    pub activations: Vec<usize>,
}

pub fn verify_partial_async(schedule: &Schedule) -> PartialAsyncReport {
    let n = schedule.n();
    let horizon = schedule.horizon();
    let mut last: Vec<i64> = vec![-1; n];
    let mut b_min = 0usize;
    let mut d_min = 0usize;
    let mut activations = vec![0usize; n];
    for (k, step) in schedule.steps().iter().enumerate() {
        let i = step.node;
        b_min = b_min.max((k as i64 - last[i] - 1) as usize);
        last[i] = k as i64;
        activations[i] += 1;
        for &s in &step.stale {
            d_min = d_min.max((k as i64 - s) as usize);
        }
    }
    for &l in &last {
        b_min = b_min.max((horizon as i64 - 1 - l).max(0) as usize);
    }
    PartialAsyncReport { holds: activations.iter().all(|&a| a > 0), b_min, d_min, activations }
}

/// Information-age analytics of a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMetrics {
    /// `tau^k = k - min_i min_{j in closed N_i} s_ij^{t_i^k}` for `k` in `0..K`,
    /// where `t_i^k` is the latest update of node `i` at or before `k`. A node
    /// that has not updated yet still holds `x_i^0` and counts as index -1.
    pub tau: Vec<i64>,
    /// Epoch starts `k^0 = 0 < k^1 < ...` that the horizon certifies.
    pub epochs: Vec<usize>,
    /// `m^k = max { m : k^m <= k }` for iterate indices `k` in `0..=K`.
    pub m: Vec<usize>,
    pub observed_b: usize,
    pub observed_d: usize,
    pub holds: bool,
    /// Read delays `k - s_ij^k` over all neighbor reads.
    pub histogram: BTreeMap<u64, u64>,
}

impl DelayMetrics {
    pub fn reads(&self) -> u64 {
        self.histogram.values().sum()
    }

    pub fn max_delay(&self) -> u64 {
        self.histogram.keys().next_back().copied().unwrap_or(0)
    }

    pub fn mean_delay(&self) -> f64 {
        let total = self.reads();
        if total == 0 {
            return 0.0;
        }
        self.histogram.iter().map(|(&d, &c)| d as f64 * c as f64).sum::<f64>() / total as f64
    }

    /// Smallest delay `v` with at least fraction `q` of the reads at or below `v`.
    pub fn delay_quantile(&self, q: f64) -> u64 {
        let total = self.reads();
        let target = (q * total as f64).ceil().max(1.0) as u64;
        let mut seen = 0;
        for (&d, &c) in &self.histogram {
            seen += c;
            if seen >= target {
                return d;
            }
        }
        0
    }
}

pub fn delay_metrics(schedule: &Schedule) -> DelayMetrics {
    let n = schedule.n();
    let horizon = schedule.horizon();
    // oldest information embodied in each node's current block
    let mut info: Vec<i64> = vec![-1; n];
    let mut tau = Vec::with_capacity(horizon);
    let mut floor = Vec::with_capacity(horizon);
    let mut histogram = BTreeMap::new();
    for (k, step) in schedule.steps().iter().enumerate() {
        let k_i = k as i64;
        let oldest = step.stale.iter().copied().fold(k_i, i64::min);
        info[step.node] = oldest;
        for &s in &step.stale {
            *histogram.entry((k_i - s) as u64).or_insert(0) += 1;
        }
        let g = info.iter().copied().min().unwrap_or(k_i);
        floor.push(g);
        tau.push(k_i - g);
    }
    // suffix minima of g(t) = t - tau^t
    let mut suffix = vec![i64::MAX; horizon + 1];
    for t in (0..horizon).rev() {
        suffix[t] = suffix[t + 1].min(floor[t]);
    }
    let mut epochs = vec![0usize];
    loop {
        let current = *epochs.last().unwrap() as i64;
        // smallest k with suffix[k] >= current; suffix is nondecreasing
        let k = suffix.partition_point(|&v| v < current);
        if k >= horizon {
            break;
        }
        epochs.push(k + 1);
    }
    let mut m = Vec::with_capacity(horizon + 1);
    let mut idx = 0;
    for k in 0..=horizon {
        while idx + 1 < epochs.len() && epochs[idx + 1] <= k {
            idx += 1;
        }
        m.push(idx);
    }
    let report = verify_partial_async(schedule);
    DelayMetrics {
        tau,
        epochs,
        m,
        observed_b: report.b_min,
        observed_d: report.d_min,
        holds: report.holds,
        histogram,
    }
}
