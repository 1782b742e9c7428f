//! Communication graphs and symmetric averaging matrices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Error};
use crate::linalg::sym_eigenvalues;
use crate::Result;

/// Undirected connected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Validates and normalizes an edge list (each pair stored as `(min, max)`, sorted).
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::Topology(format!("a network needs at least two nodes, got {n}")));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Topology(format!("edge ({a}, {b}) references a node outside 0..{n}")));
            }
            if a == b {
                return Err(Error::Topology(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::Topology(format!("duplicate edge ({a}, {b})")));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let g = Self { n, edges, adj };
        if !g.is_connected() {
            return Err(Error::Topology("graph is not connected".into()));
        }
        Ok(g)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Open neighborhood `N_i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn line(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return param_err(format!("a ring needs at least three nodes, got {n}"));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new(n, &edges)
    }

    /// Star with center 0.
    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges)
    }

    /// Random spanning tree (random recursive attachment) plus uniformly chosen extra edges.
    pub fn random_connected(n: usize, m: usize, seed: u64) -> Result<Self> {
        let max_edges = n * n.saturating_sub(1) / 2;
        if n < 2 || m < n - 1 || m > max_edges {
            return param_err(format!(
                "cannot build a connected graph on {n} nodes with {m} edges (need {} to {max_edges})",
                n.saturating_sub(1)
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut chosen = BTreeSet::new();
        for k in 1..n {
            let parent = order[rng.gen_range(0..k)];
            let (a, b) = (order[k], parent);
            chosen.insert((a.min(b), a.max(b)));
        }
        let mut rest: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !chosen.contains(e))
            .collect();
        rest.shuffle(&mut rng);
        chosen.extend(rest.into_iter().take(m - (n - 1)));
        let edges: Vec<_> = chosen.into_iter().collect();
        Self::new(n, &edges)
    }

    /// One `i j` pair per line, 0-indexed, preceded by a `# nodes n` header.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# nodes {}\n", self.n);
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "{a} {b}");
        }
        s
    }

    /// Parses [`Graph::to_edge_list`] output. Without a `# nodes` header the
    /// node count is one more than the largest index.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                if it.next() == Some("nodes") {
                    let v = it.next().ok_or_else(|| parse_error(lineno, "missing node count"))?;
                    n = Some(v.parse::<usize>().map_err(|e| parse_error(lineno, &e.to_string()))?);
                }
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(parse_error(lineno, "expected two node indices"));
            }
            let a = parts[0].parse::<usize>().map_err(|e| parse_error(lineno, &e.to_string()))?;
            let b = parts[1].parse::<usize>().map_err(|e| parse_error(lineno, &e.to_string()))?;
            edges.push((a, b));
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0));
        Self::new(n, &edges)
    }
}

fn parse_error(lineno: usize, msg: &str) -> Error {
    Error::Parse(format!("edge list line {}: {msg}", lineno + 1))
}

/// Symmetric, nonnegative, stochastic averaging matrix over a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    closed: Vec<Vec<usize>>,
    beta: f64,
    lambda2: f64,
    lambda_min: f64,
}

impl MixingMatrix {
    /// Validates a dense matrix; the communication pattern is its off-diagonal support.
    pub fn from_dense(w: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if n < 2 || w.ncols() != n {
            return Err(Error::Topology(format!("mixing matrix must be square with n >= 2, got {}x{}", n, w.ncols())));
        }
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let v = w[(i, j)];
                if !(v >= 0.0) {
                    return Err(Error::Topology(format!("negative or NaN weight at ({i}, {j})")));
                }
                if v != w[(j, i)] {
                    return Err(Error::Topology(format!("weights ({i}, {j}) and ({j}, {i}) differ")));
                }
                row += v;
            }
            if (row - 1.0).abs() > 1e-12 {
                return Err(Error::Topology(format!("row {i} sums to {row}")));
            }
        }
        let closed: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j == i || w[(i, j)] > 0.0).collect())
            .collect();
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| closed[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect();
        Graph::new(n, &edges)?;
        let vals = sym_eigenvalues(&w);
        let (lambda2, lambda_min) = (vals[1], vals[n - 1]);
        let beta = lambda2.abs().max(lambda_min.abs());
        if beta >= 1.0 - 1e-12 {
            return Err(Error::Topology(format!("mixing rate beta = {beta} is not below one")));
        }
        Ok(Self { w, closed, beta, lambda2, lambda_min })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn self_weight(&self, i: usize) -> f64 {
        self.w[(i, i)]
    }

    pub fn self_weights(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.w[(i, i)]).collect()
    }

    /// Closed neighborhood `N_i ∪ {i}`, ascending.
    pub fn closed_neighbors(&self, i: usize) -> &[usize] {
        &self.closed[i]
    }

    /// `max(|lambda_2|, |lambda_n|)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn positive_definite(&self) -> bool {
        self.lambda_min > 0.0
    }

    /// Comma-separated rows, no header.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n()).map(|j| self.w[(i, j)].to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// `w_ij = 1/(max(|N_i|, |N_j|) + 1)` on edges, diagonal completes each row.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for &(a, b) in g.edges() {
        let v = 1.0 / (g.degree(a).max(g.degree(b)) + 1) as f64;
        w[(a, b)] = v;
        w[(b, a)] = v;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_dense(w)
}

/// `(W + I)/2`, positive definite for any averaging matrix.
pub fn lazy_transform(w: &MixingMatrix) -> Result<MixingMatrix> {
    let n = w.n();
    let mut lazy = w.matrix() * 0.5;
    for i in 0..n {
        lazy[(i, i)] += 0.5;
    }
    MixingMatrix::from_dense(lazy)
}

/// `max(|lambda_2|, |lambda_n|)` of a symmetric stochastic matrix.
pub fn spectral_beta(w: &DMatrix<f64>) -> Result<f64> {
    Ok(MixingMatrix::from_dense(w.clone())?.beta())
}
