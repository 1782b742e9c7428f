//! Execution engines.
//!
//! [`simulate`] replays a [`Schedule`] deterministically. [`run_concurrent`]
//! runs one thread per node exchanging messages through single-slot
//! buffers; the order in which updates complete defines the global iteration
//! counter, and the recorded schedule replays bit for bit through
//! [`simulate`]. [`run_synchronous`] iterates the synchronous map.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::asynchrony::{Schedule, Step};
use crate::error::Error;
use crate::linalg::dist;
use crate::operators::{adapt_into, apply_full, update_block_into, AlgorithmKind, AlgorithmSpec};
use crate::problem::BlockVector;
use crate::Result;

/// What to record while running.
#[derive(Debug, Clone)]
pub struct TraceOptions {
    /// Snapshots and objective metrics are taken every `stride` iterations
    /// (plus the first and last iterate).
    pub stride: usize,
    /// When set, the block-max distance to it is recorded at every iteration.
    pub x_star: Option<BlockVector>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { stride: 1, x_star: None }
    }
}

/// Objective metrics of one recorded iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub k: usize,
    /// Node that produced `x^k` (none for the initial point).
    pub active_node: Option<usize>,
    pub distance: Option<f64>,
    /// `F(x^k) = sum_i f_i(x_i^k) + h_i(x_i^k)`.
    pub f_value: f64,
    /// `sum_i f_i(x_bar) + h_i(x_bar)` at the block average.
    pub f_mean: f64,
    pub consensus_error: f64,
}

/// Everything recorded about one execution.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub kind: AlgorithmKind,
    pub alpha: f64,
    pub step_override: bool,
    /// Replayable schedule; absent for [`run_synchronous`], whose index counts rounds.
    pub schedule: Option<Schedule>,
    pub snapshots: Vec<(usize, BlockVector)>,
    pub metrics: Vec<MetricRow>,
    /// `||x^k - x*||` in the block-max norm for every `k`, when `x*` was given.
    pub distances: Option<Vec<f64>>,
    /// Completion time of each iteration since the runtime started.
    pub timestamps_ns: Option<Vec<u64>>,
    pub failure: Option<String>,
    pub final_x: BlockVector,
}

impl RunTrace {
    /// Number of iterations performed.
    pub fn iterations(&self) -> usize {
        self.metrics.last().map_or(0, |m| m.k)
    }
}

struct TraceBuilder<'a> {
    spec: &'a AlgorithmSpec,
    options: &'a TraceOptions,
    x: BlockVector,
    block_dist: Vec<f64>,
    distances: Option<Vec<f64>>,
    snapshots: Vec<(usize, BlockVector)>,
    metrics: Vec<MetricRow>,
}

impl<'a> TraceBuilder<'a> {
    fn new(spec: &'a AlgorithmSpec, options: &'a TraceOptions, x0: &BlockVector) -> Result<Self> {
        if options.stride == 0 {
            return Err(Error::Parameter("snapshot stride must be at least 1".into()));
        }
        let mut block_dist = Vec::new();
        let mut distances = None;
        if let Some(xs) = &options.x_star {
            if xs.n() != x0.n() || xs.d() != x0.d() {
                return Err(Error::Dimension("fixed point shape differs from the initial point".into()));
            }
            block_dist = (0..x0.n()).map(|i| dist(x0.block(i), xs.block(i))).collect();
            distances = Some(vec![block_dist.iter().copied().fold(0.0, f64::max)]);
        }
        let mut b = Self {
            spec,
            options,
            x: x0.clone(),
            block_dist,
            distances,
            snapshots: Vec::new(),
            metrics: Vec::new(),
        };
        b.record(0, None)?;
        Ok(b)
    }

    fn record(&mut self, k: usize, active: Option<usize>) -> Result<()> {
        let p = self.spec.problem();
        self.snapshots.push((k, self.x.clone()));
        self.metrics.push(MetricRow {
            k,
            active_node: active,
            distance: self.distances.as_ref().map(|d| d[k]),
            f_value: p.eval_big_f(&self.x)?,
            f_mean: p.consensus_objective(&self.x.mean_block())?,
            consensus_error: self.x.consensus_error(),
        });
        Ok(())
    }

    /// Installs the block produced at iteration `k` (giving `x^{k+1}`).
    fn push(&mut self, k: usize, node: usize, block: &[f64], last: bool) -> Result<()> {
        self.x.block_mut(node).copy_from_slice(block);
        if let (Some(xs), Some(d)) = (&self.options.x_star, self.distances.as_mut()) {
            self.block_dist[node] = dist(block, xs.block(node));
            d.push(self.block_dist.iter().copied().fold(0.0, f64::max));
        }
        if (k + 1) % self.options.stride == 0 || last {
            self.record(k + 1, Some(node))?;
        }
        Ok(())
    }

    fn finish(self, schedule: Option<Schedule>, timestamps_ns: Option<Vec<u64>>, failure: Option<String>) -> RunTrace {
        RunTrace {
            kind: self.spec.kind(),
            alpha: self.spec.alpha(),
            step_override: self.spec.step_override(),
            schedule,
            snapshots: self.snapshots,
            metrics: self.metrics,
            distances: self.distances,
            timestamps_ns,
            failure,
            final_x: self.x,
        }
    }
}

fn check_compatible(spec: &AlgorithmSpec, x0: &BlockVector) -> Result<()> {
    if x0.n() != spec.n() || x0.d() != spec.d() {
        return Err(Error::Dimension(format!(
            "initial point shape ({}, {}) does not match ({}, {})",
            x0.n(),
            x0.d(),
            spec.n(),
            spec.d()
        )));
    }
    Ok(())
}

fn open_neighbors(spec: &AlgorithmSpec, i: usize) -> Vec<usize> {
    spec.mixing().closed_neighbors(i).iter().copied().filter(|&j| j != i).collect()
}

/// One retained version of a block: valid for iterate indices `>= start`.
struct Version {
    start: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

/// Replays `schedule`: at iteration `k` node `i(k)` updates from the blocks
/// (Prox-DGD) or messages (DGD-ATC) of `x^{s_ij^k}` and its own current block.
pub fn simulate(
    spec: &AlgorithmSpec,
    schedule: &Schedule,
    x0: &BlockVector,
    options: &TraceOptions,
) -> Result<RunTrace> {
    check_compatible(spec, x0)?;
    let (n, d) = (spec.n(), spec.d());
    if schedule.n() != n {
        return Err(Error::Schedule(format!("schedule has {} nodes, spec has {n}", schedule.n())));
    }
    for i in 0..n {
        if schedule.neighbors(i) != open_neighbors(spec, i).as_slice() {
            return Err(Error::Schedule(format!(
                "neighbors of node {i} differ between schedule and mixing matrix"
            )));
        }
    }
    let atc = spec.kind() == AlgorithmKind::DgdAtc;
    let horizon = schedule.horizon();
    // smallest stale index read at or after each iteration, for pruning
    let mut future_min = vec![i64::MAX; horizon + 1];
    for (k, step) in schedule.steps().iter().enumerate().rev() {
        let m = step.stale.iter().copied().min().unwrap_or(i64::MAX);
        future_min[k] = future_min[k + 1].min(m);
    }
    let mut history: Vec<Vec<Version>> = (0..n)
        .map(|j| {
            let x = x0.block(j).to_vec();
            let mut y = vec![0.0; d];
            if atc {
                adapt_into(spec, j, &x, &mut y);
            }
            vec![Version { start: 0, x, y }]
        })
        .collect();
    let mut builder = TraceBuilder::new(spec, options, x0)?;
    let mut out = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for (k, Step { node, stale }) in schedule.steps().iter().enumerate() {
        let i = *node;
        let neighbors = schedule.neighbors(i);
        let mut reads: Vec<&[f64]> = Vec::with_capacity(neighbors.len());
        for (&j, &s) in neighbors.iter().zip(stale) {
            let versions = &history[j];
            let pos = versions.partition_point(|v| v.start as i64 <= s).max(1) - 1;
            let v = &versions[pos];
            if s >= 0 && v.start as i64 > s {
                return Err(Error::Schedule(format!("iteration {k}: value of node {j} at index {s} was discarded")));
            }
            reads.push(if atc { &v.y } else { &v.x });
        }
        let own = history[i].last().unwrap();
        let own_msg: &[f64] = if atc { &own.y } else { &own.x };
        let input = |j: usize| -> &[f64] {
            if j == i {
                own_msg
            } else {
                reads[neighbors.binary_search(&j).unwrap()]
            }
        };
        update_block_into(spec, i, input, &own.x, &mut out, &mut scratch);
        let mut y = vec![0.0; d];
        if atc {
            adapt_into(spec, i, &out, &mut y);
        }
        history[i].push(Version { start: k + 1, x: out.clone(), y });
        if k % n == n - 1 {
            let keep_from = future_min[k + 1];
            for versions in &mut history {
                let pos = versions.partition_point(|v| v.start as i64 <= keep_from).max(1) - 1;
                if pos > 0 {
                    versions.drain(..pos);
                }
            }
        }
        builder.push(k, i, &out, k + 1 == horizon)?;
    }
    Ok(builder.finish(Some(schedule.clone()), None, None))
}

/// Iterates the synchronous map; index `k` counts full rounds.
pub fn run_synchronous(
    spec: &AlgorithmSpec,
    iterations: usize,
    x0: &BlockVector,
    options: &TraceOptions,
) -> Result<RunTrace> {
    check_compatible(spec, x0)?;
    let mut builder = TraceBuilder::new(spec, options, x0)?;
    for k in 0..iterations {
        let next = apply_full(spec, &builder.x)?;
        builder.x = next;
        if let (Some(xs), Some(dd)) = (&options.x_star, builder.distances.as_mut()) {
            for i in 0..xs.n() {
                builder.block_dist[i] = dist(builder.x.block(i), xs.block(i));
            }
            dd.push(builder.block_dist.iter().copied().fold(0.0, f64::max));
        }
        if (k + 1) % options.stride == 0 || k + 1 == iterations {
            builder.record(k + 1, None)?;
        }
    }
    Ok(builder.finish(None, None, None))
}

/// Settings of the threaded runtime.
#[derive(Debug, Clone)]
pub struct RuntimeOptions {
    /// Global iteration budget `K`.
    pub iterations: usize,
    /// Optional wall-clock budget; the run stops at whichever comes first.
    pub duration: Option<Duration>,
    /// Fresh messages a node needs before updating; defaults to
    /// `max(|N_i| - 1, 1)` and is capped at `|N_i|`.
    pub threshold: Option<usize>,
    pub trace: TraceOptions,
    /// Fault injection: `(node, updates)` makes that worker panic after the
    /// given number of its own updates.
    pub panic_after: Option<(usize, usize)>,
}

impl RuntimeOptions {
    pub fn with_iterations(iterations: usize) -> Self {
        Self { iterations, duration: None, threshold: None, trace: TraceOptions::default(), panic_after: None }
    }
}

struct Message {
    from: usize,
    /// Iterate index from which this value is current (0 for initial values).
    version: usize,
    payload: Vec<f64>,
}

struct UpdateRecord {
    k: usize,
    node: usize,
    /// `(neighbor, version)` of every consumed neighbor value, ascending neighbor ids.
    consumed: Vec<(usize, usize)>,
    block: Vec<f64>,
    elapsed_ns: u64,
}

/// Runs one worker thread per node until the iteration or time budget is spent.
///
/// Each worker keeps the latest message per neighbor, updates once at least
/// `threshold` neighbors delivered a new message since its previous update
/// (the first update waits for every neighbor's initial message), claims the
/// next global index from a shared counter and broadcasts its new block
/// (Prox-DGD) or adapted message (DGD-ATC). The returned trace is built from
/// the workers' own results, and its schedule labels each consumed value
/// with the latest iterate index at which that value was still current.
pub fn run_concurrent(spec: &AlgorithmSpec, x0: &BlockVector, options: &RuntimeOptions) -> Result<RunTrace> {
    check_compatible(spec, x0)?;
    let n = spec.n();
    let budget = options.iterations as u64;
    let counter = Arc::new(AtomicU64::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let start = Instant::now();
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| mpsc::channel::<Message>()).unzip();
    let atc = spec.kind() == AlgorithmKind::DgdAtc;

    let results: Vec<std::result::Result<Vec<UpdateRecord>, String>> = thread::scope(|scope| {
        let mut handles = Vec::with_capacity(n);
        for (i, rx) in receivers.into_iter().enumerate() {
            let neighbors = open_neighbors(spec, i);
            let outboxes: Vec<mpsc::Sender<Message>> = neighbors.iter().map(|&j| senders[j].clone()).collect();
            let counter = Arc::clone(&counter);
            let stop = Arc::clone(&stop);
            let threshold = options
                .threshold
                .unwrap_or_else(|| neighbors.len().saturating_sub(1).max(1))
                .clamp(1, neighbors.len().max(1));
            let panic_after = options.panic_after.filter(|&(node, _)| node == i).map(|(_, c)| c);
            let x_init = x0.block(i).to_vec();
            handles.push(scope.spawn(move || {
                let stop_on_exit = StopOnDrop(&stop);
                let records = worker(
                    spec, i, &neighbors, threshold, x_init, atc, rx, outboxes, &counter, &stop, budget, start,
                    panic_after,
                );
                drop(stop_on_exit);
                records
            }));
        }
        drop(senders);
        if let Some(limit) = options.duration {
            while !stop.load(Ordering::Acquire) && start.elapsed() < limit {
                thread::sleep(Duration::from_millis(1));
            }
            stop.store(true, Ordering::Release);
        }
        handles
            .into_iter()
            .map(|h| {
                h.join().map_err(|e| {
                    e.downcast_ref::<String>()
                        .cloned()
                        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "worker panicked".into())
                })
            })
            .collect()
    });

    let mut failure = None;
    let mut records = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(mut recs) => records.append(&mut recs),
            Err(msg) => failure = Some(format!("worker {i} failed: {msg}")),
        }
    }
    records.sort_by_key(|r| r.k);
    // keep the gap-free prefix of claimed indices
    let complete = records.iter().enumerate().take_while(|(pos, r)| r.k == *pos).count();
    if complete < records.len() && failure.is_none() {
        failure = Some(format!("iteration {complete} was claimed but never completed"));
    }
    records.truncate(complete);

    let mut updates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in &records {
        updates[r.node].push(r.k);
    }
    let mut steps = Vec::with_capacity(records.len());
    for r in &records {
        let stale = r
            .consumed
            .iter()
            .map(|&(j, version)| {
                let list = &updates[j];
                let next = list.partition_point(|&u| u < version);
                let last_current = list.get(next).copied().unwrap_or(r.k).min(r.k);
                last_current as i64
            })
            .collect();
        steps.push(Step { node: r.node, stale });
    }
    let neighbors = (0..n).map(|i| open_neighbors(spec, i)).collect();
    let schedule = Schedule::new(neighbors, steps, None)?;

    let mut builder = TraceBuilder::new(spec, &options.trace, x0)?;
    let total = records.len();
    let mut timestamps = Vec::with_capacity(total);
    for r in &records {
        builder.push(r.k, r.node, &r.block, r.k + 1 == total)?;
        timestamps.push(r.elapsed_ns);
    }
    Ok(builder.finish(Some(schedule), Some(timestamps), failure))
}

struct StopOnDrop<'a>(&'a AtomicBool);

impl Drop for StopOnDrop<'_> {
    fn drop(&mut self) {
        if thread::panicking() {
            self.0.store(true, Ordering::Release);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn worker(
    spec: &AlgorithmSpec,
    i: usize,
    neighbors: &[usize],
    threshold: usize,
    mut x: Vec<f64>,
    atc: bool,
    rx: mpsc::Receiver<Message>,
    outboxes: Vec<mpsc::Sender<Message>>,
    counter: &AtomicU64,
    stop: &AtomicBool,
    budget: u64,
    start: Instant,
    panic_after: Option<usize>,
) -> Vec<UpdateRecord> {
    let d = x.len();
    let mut own_msg = vec![0.0; d];
    let broadcast = |x: &[f64], own_msg: &mut Vec<f64>, version: usize| {
        if atc {
            adapt_into(spec, i, x, own_msg);
        } else {
            own_msg.copy_from_slice(x);
        }
        for tx in &outboxes {
            // a receiver only disappears once the run is over
            let _ = tx.send(Message { from: i, version, payload: own_msg.clone() });
        }
    };
    broadcast(&x, &mut own_msg, 0);

    let mut latest: Vec<Option<(usize, Vec<f64>)>> = vec![None; neighbors.len()];
    let mut fresh = vec![false; neighbors.len()];
    let mut records = Vec::new();
    let mut out = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    loop {
        if stop.load(Ordering::Acquire) {
            break;
        }
        let ready = latest.iter().all(Option::is_some)
            && fresh.iter().filter(|&&f| f).count() >= threshold.min(neighbors.len());
        if !ready {
            match rx.recv_timeout(Duration::from_millis(1)) {
                Ok(msg) => {
                    let slot = neighbors.binary_search(&msg.from).expect("message from a neighbor");
                    latest[slot] = Some((msg.version, msg.payload));
                    fresh[slot] = true;
                    while let Ok(msg) = rx.try_recv() {
                        let slot = neighbors.binary_search(&msg.from).expect("message from a neighbor");
                        latest[slot] = Some((msg.version, msg.payload));
                        fresh[slot] = true;
                    }
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
            continue;
        }
        fresh.iter_mut().for_each(|f| *f = false);
        let consumed: Vec<(usize, usize)> = neighbors
            .iter()
            .zip(&latest)
            .map(|(&j, v)| (j, v.as_ref().unwrap().0))
            .collect();
        {
            let input = |j: usize| -> &[f64] {
                if j == i {
                    &own_msg
                } else {
                    &latest[neighbors.binary_search(&j).unwrap()].as_ref().unwrap().1
                }
            };
            update_block_into(spec, i, input, &x, &mut out, &mut scratch);
        }
        let k = counter.fetch_add(1, Ordering::AcqRel);
        if k >= budget {
            stop.store(true, Ordering::Release);
            break;
        }
        let elapsed_ns = start.elapsed().as_nanos() as u64;
        x.copy_from_slice(&out);
        broadcast(&x, &mut own_msg, k as usize + 1);
        records.push(UpdateRecord { k: k as usize, node: i, consumed, block: x.clone(), elapsed_ns });
        if k + 1 >= budget {
            stop.store(true, Ordering::Release);
        }
        if panic_after.is_some_and(|limit| records.len() >= limit) {
            panic!("injected failure at node {i}");
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asynchrony::{gen_partial_async, gen_synchronous, verify_partial_async};
    use crate::mixing::{lazy_transform, metropolis_weights, Graph};
    use crate::operators::max_stepsize;
    use crate::problem::{block_max_norm, synthetic, ConsensusProblem, ProxOracle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad_spec(kind: AlgorithmKind, n: usize, seed: u64) -> (AlgorithmSpec, Graph) {
        let g = Graph::random_connected(n, n + 2, seed).unwrap();
        let mut w = metropolis_weights(&g).unwrap();
        if kind == AlgorithmKind::DgdAtc {
            w = lazy_transform(&w).unwrap();
        }
        let p = synthetic::random_quadratic_problem(n, 3, 6, false, seed).unwrap();
        let alpha = 0.9 * max_stepsize(kind, &p, &w);
        (AlgorithmSpec::new(kind, p, w, alpha).unwrap(), g)
    }

    fn random_x0(n: usize, d: usize, seed: u64) -> BlockVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BlockVector::new(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn synchronous_schedule_reproduces_full_map() {
        for kind in [AlgorithmKind::ProxDgd, AlgorithmKind::DgdAtc] {
            let (spec, g) = quad_spec(kind, 5, 3);
            let x0 = random_x0(5, 3, 1);
            let rounds = 6;
            let sched = gen_synchronous(&g, rounds * 5).unwrap();
            let trace = simulate(&spec, &sched, &x0, &TraceOptions { stride: 5, x_star: None }).unwrap();
            let mut x = x0.clone();
            for r in 1..=rounds {
                x = apply_full(&spec, &x).unwrap();
                let snap = &trace.snapshots.iter().find(|(k, _)| *k == r * 5).unwrap().1;
                assert_eq!(snap, &x, "{kind} round {r}");
            }
            let sync = run_synchronous(&spec, rounds, &x0, &TraceOptions::default()).unwrap();
            assert_eq!(sync.final_x, trace.final_x);
        }
    }

    #[test]
    fn zero_iterations_return_initial_point() {
        let (spec, _) = quad_spec(AlgorithmKind::ProxDgd, 4, 1);
        let x0 = random_x0(4, 3, 2);
        let t = run_synchronous(&spec, 0, &x0, &TraceOptions::default()).unwrap();
        assert_eq!(t.final_x, x0);
        assert_eq!(t.snapshots.len(), 1);
    }

    #[test]
    fn fixed_point_start_stays_put() {
        let n = 4;
        let g = Graph::ring(n).unwrap();
        let w = metropolis_weights(&g).unwrap();
        // f_i = ||x - c||^2 with a common c: consensus at c is fixed
        let f = crate::problem::make_quadratic_oracle(&[1.0, 0.0, 0.0, 1.0], 2, 2, &[0.3, -0.7]).unwrap();
        let p = ConsensusProblem::new(vec![f; n], vec![ProxOracle::zero(2); n]).unwrap();
        let spec = AlgorithmSpec::new(AlgorithmKind::ProxDgd, p, w, 0.2).unwrap();
        let xs = BlockVector::consensus(n, &[0.3, -0.7]);
        let sched = gen_partial_async(&g, 6, 4, 200, 1).unwrap();
        let t = simulate(&spec, &sched, &xs, &TraceOptions { stride: 1, x_star: Some(xs.clone()) }).unwrap();
        assert!(t.distances.unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn schedule_mismatch_is_rejected() {
        let (spec, _) = quad_spec(AlgorithmKind::ProxDgd, 4, 1);
        let other = gen_synchronous(&Graph::line(4).unwrap(), 8).unwrap();
        assert!(matches!(
            simulate(&spec, &other, &random_x0(4, 3, 0), &TraceOptions::default()),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn pruning_keeps_needed_history() {
        let (spec, g) = quad_spec(AlgorithmKind::ProxDgd, 6, 2);
        let x0 = random_x0(6, 3, 4);
        let sched = gen_partial_async(&g, 20, 40, 3000, 3).unwrap();
        let pruned = simulate(&spec, &sched, &x0, &TraceOptions { stride: 1000, x_star: None }).unwrap();
        // naive replay keeping every iterate
        let mut iterates = vec![x0.clone()];
        for (k, step) in sched.steps().iter().enumerate() {
            let i = step.node;
            let inputs: Vec<Vec<f64>> = spec
                .mixing()
                .closed_neighbors(i)
                .iter()
                .map(|&j| {
                    if j == i {
                        iterates[k].block(i).to_vec()
                    } else {
                        let pos = sched.neighbors(i).iter().position(|&q| q == j).unwrap();
                        iterates[step.stale[pos].max(0) as usize].block(j).to_vec()
                    }
                })
                .collect();
            let mut next = iterates[k].clone();
            let blk = crate::operators::apply_block(&spec, i, &inputs, iterates[k].block(i)).unwrap();
            next.block_mut(i).copy_from_slice(&blk);
            iterates.push(next);
        }
        assert_eq!(&pruned.final_x, iterates.last().unwrap());
    }

    #[test]
    fn concurrent_run_replays_exactly() {
        for kind in [AlgorithmKind::ProxDgd, AlgorithmKind::DgdAtc] {
            let (spec, _) = quad_spec(kind, 5, 7);
            let x0 = random_x0(5, 3, 9);
            let opts = RuntimeOptions::with_iterations(600);
            let t = run_concurrent(&spec, &x0, &opts).unwrap();
            assert!(t.failure.is_none());
            let sched = t.schedule.clone().unwrap();
            assert_eq!(sched.horizon(), 600);
            assert!(verify_partial_async(&sched).holds);
            let replay = simulate(&spec, &sched, &x0, &TraceOptions::default()).unwrap();
            assert_eq!(replay.snapshots.len(), t.snapshots.len());
            for ((ka, a), (kb, b)) in replay.snapshots.iter().zip(&t.snapshots) {
                assert_eq!(ka, kb);
                assert_eq!(a, b, "{kind} snapshot {ka}");
            }
            let ts = t.timestamps_ns.unwrap();
            assert!(ts.windows(2).all(|w| w[0] <= w[1] + 50_000_000));
        }
    }

    #[test]
    fn concurrent_run_with_time_budget_stops() {
        let (spec, _) = quad_spec(AlgorithmKind::ProxDgd, 4, 5);
        let x0 = random_x0(4, 3, 1);
        let mut opts = RuntimeOptions::with_iterations(usize::MAX / 2);
        opts.duration = Some(Duration::from_millis(30));
        opts.trace.stride = 1000;
        let t = run_concurrent(&spec, &x0, &opts).unwrap();
        assert!(t.failure.is_none());
        let sched = t.schedule.unwrap();
        let replay = simulate(&spec, &sched, &x0, &TraceOptions { stride: 1000, x_star: None }).unwrap();
        assert_eq!(replay.final_x, t.final_x);
    }

    #[test]
    fn worker_failure_yields_partial_trace() {
        let (spec, _) = quad_spec(AlgorithmKind::ProxDgd, 4, 5);
        let x0 = random_x0(4, 3, 1);
        let mut opts = RuntimeOptions::with_iterations(10_000);
        opts.panic_after = Some((2, 5));
        let t = run_concurrent(&spec, &x0, &opts).unwrap();
        assert!(t.failure.is_some());
        let sched = t.schedule.unwrap();
        assert!(sched.horizon() < 10_000);
        let replay = simulate(&spec, &sched, &x0, &TraceOptions::default()).unwrap();
        assert_eq!(replay.final_x, t.final_x);
    }

    #[test]
    fn block_max_distance_never_grows_past_start() {
        let (spec, g) = quad_spec(AlgorithmKind::ProxDgd, 6, 11);
        let x0 = random_x0(6, 3, 3);
        let xs = crate::analysis::fixed_point(&spec, 1e-13, 200_000).unwrap().x_star;
        let sched = gen_partial_async(&g, 10, 10, 2000, 5).unwrap();
        let t = simulate(&spec, &sched, &x0, &TraceOptions { stride: 500, x_star: Some(xs.clone()) }).unwrap();
        let d0 = block_max_norm(&x0, &xs).unwrap();
        assert!(t.distances.unwrap().iter().all(|&d| d <= d0 + 1e-12));
    }
}
