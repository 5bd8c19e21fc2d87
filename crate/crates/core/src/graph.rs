//! Finite multigraphs and the affine preferential attachment generator.
//!
//! Vertices are 0-indexed internally. The vertex labels used by
//! the attachment rule (`v = 1, 2, ...`) are 1-indexed and appear only in the
//! [`PaGrowth`] API and in the edge-list file format.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;

/// An undirected multigraph. Self-loops and parallel edges are allowed.
///
/// Edges are stored as ordered pairs `(u, v)` with `u >= v`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MultiGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl MultiGraph {
    pub fn new(n: usize) -> Self {
        Self { n, edges: Vec::new() }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let mut g = Self::new(n);
        for v in 1..n {
            g.edges.push((v, v - 1));
        }
        g
    }

    /// Star with centre `0` and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        let mut g = Self::new(leaves + 1);
        for v in 1..=leaves {
            g.edges.push((v, 0));
        }
        g
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        for x in [u, v] {
            if x >= self.n {
                return Err(Error::VertexOutOfRange { vertex: x, n: self.n });
            }
        }
        self.edges.push((u.max(v), u.min(v)));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Degrees with a self-loop counted twice.
    pub fn degrees(&self) -> Vec<u64> {
        let mut d = vec![0u64; self.n];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Adjacency lists of `(neighbour, edge index)`. A self-loop appears
    /// twice in its vertex's list.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            adj[u].push((v, e));
            adj[v].push((u, e));
        }
        adj
    }

    /// Connected, acyclic, no self-loops or parallel edges.
    pub fn is_tree(&self) -> bool {
        if self.n == 0 || self.edges.len() != self.n - 1 {
            return false;
        }
        if self.edges.iter().any(|&(u, v)| u == v) {
            return false;
        }
        // n - 1 edges and connected implies acyclic
        let dist = bfs_distances(self, 0, usize::MAX);
        dist.iter().all(|d| d.is_some())
    }

    /// Breadth-first ball of the given radius around `root`.
    ///
    /// The ball keeps every vertex within graph distance `radius` and every
    /// edge (with multiplicity) that has at least one endpoint at distance
    /// strictly less than `radius`. Radius 0 is the bare root.
    pub fn neighborhood(&self, root: usize, radius: usize) -> Result<RootedSubgraph> {
        if root >= self.n {
            return Err(Error::VertexOutOfRange { vertex: root, n: self.n });
        }
        let dist = bfs_distances(self, root, radius);
        let mut local = vec![usize::MAX; self.n];
        let mut vertices = Vec::new();
        // BFS order keeps the root at local index 0
        let mut order: Vec<usize> = (0..self.n).filter(|&v| dist[v].is_some()).collect();
        order.sort_by_key(|&v| (dist[v], v));
        for v in order {
            local[v] = vertices.len();
            vertices.push(v);
        }
        let mut graph = MultiGraph::new(vertices.len());
        for &(u, v) in &self.edges {
            if let (Some(du), Some(dv)) = (dist[u], dist[v]) {
                if du.min(dv) < radius {
                    graph.edges.push((local[u].max(local[v]), local[u].min(local[v])));
                }
            }
        }
        Ok(RootedSubgraph { root: 0, vertices, graph })
    }

    /// Subgraph induced by `vertices`, relabelled in the given order.
    pub fn induced(&self, vertices: &[usize]) -> Result<MultiGraph> {
        let mut local = vec![usize::MAX; self.n];
        for (i, &v) in vertices.iter().enumerate() {
            if v >= self.n {
                return Err(Error::VertexOutOfRange { vertex: v, n: self.n });
            }
            if local[v] != usize::MAX {
                return Err(invalid(format!("vertex {v} listed twice")));
            }
            local[v] = i;
        }
        let mut g = MultiGraph::new(vertices.len());
        for &(u, v) in &self.edges {
            if local[u] != usize::MAX && local[v] != usize::MAX {
                g.edges.push((local[u].max(local[v]), local[u].min(local[v])));
            }
        }
        Ok(g)
    }
}

/// BFS distances from `root`, cut off beyond `radius`.
fn bfs_distances(g: &MultiGraph, root: usize, radius: usize) -> Vec<Option<usize>> {
    let adj = g.adjacency();
    let mut dist = vec![None; g.n];
    let mut queue = VecDeque::new();
    dist[root] = Some(0);
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        if du >= radius {
            continue;
        }
        for &(w, _) in &adj[u] {
            if dist[w].is_none() {
                dist[w] = Some(du + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// A ball around a vertex, relabelled so that the root is local vertex 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedSubgraph {
    pub root: usize,
    /// Global vertex id of each local vertex.
    pub vertices: Vec<usize>,
    pub graph: MultiGraph,
}

/// Degrees of the two seed vertices and the edges between them.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialGraph {
    /// Edges among the seed vertices, 1-indexed (`1` or `2`).
    pub edges: Vec<(usize, usize)>,
}

impl InitialGraph {
    /// `m` parallel edges between vertex 1 and vertex 2.
    pub fn parallel(m: usize) -> Self {
        Self { edges: vec![(2, 1); m] }
    }

    pub fn degrees(&self) -> (u64, u64) {
        let mut d = [0u64; 2];
        for &(u, v) in &self.edges {
            d[u - 1] += 1;
            d[v - 1] += 1;
        }
        (d[0], d[1])
    }
}

/// Parameters of preferential attachment model (a).
#[derive(Debug, Clone, PartialEq)]
pub struct PaParams {
    pub m: usize,
    pub delta: f64,
    pub n: usize,
    pub seed: u64,
    pub initial: InitialGraph,
}

impl PaParams {
    /// Default seed graph of `m` parallel edges.
    pub fn new(m: usize, delta: f64, n: usize, seed: u64) -> Result<Self> {
        let p = Self { m, delta, n, seed, initial: InitialGraph::parallel(m) };
        p.validate()?;
        Ok(p)
    }

    pub fn with_initial(mut self, initial: InitialGraph) -> Result<Self> {
        self.initial = initial;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(invalid(format!("m must be at least 2, got {}", self.m)));
        }
        if !(self.delta > -(self.m as f64)) || !self.delta.is_finite() {
            return Err(invalid(format!("delta must exceed -m, got {}", self.delta)));
        }
        if self.n < 2 {
            return Err(invalid(format!("n must be at least 2, got {}", self.n)));
        }
        if self.initial.edges.iter().any(|&(u, v)| !(1..=2).contains(&u) || !(1..=2).contains(&v)) {
            return Err(invalid("initial edges must join vertices 1 and 2"));
        }
        let (a1, a2) = self.initial.degrees();
        if a1.min(a2) > self.m as u64 {
            return Err(invalid("one seed vertex must have degree at most m"));
        }
        if (a1 as f64) + self.delta <= 0.0 || (a2 as f64) + self.delta <= 0.0 {
            return Err(invalid("seed degrees plus delta must be positive"));
        }
        Ok(())
    }

    /// `(m + delta) / (2m + delta)`.
    pub fn chi(&self) -> f64 {
        chi(self.m, self.delta)
    }

    /// `a_1 + a_2`.
    pub fn initial_degree_sum(&self) -> u64 {
        let (a1, a2) = self.initial.degrees();
        a1 + a2
    }

    /// The normalising constant `c_{v,j}` of the attachment rule.
    pub fn normalizer(&self, v: usize, j: usize) -> f64 {
        let m = self.m as f64;
        let d = self.delta;
        let jf = j as f64;
        self.initial_degree_sum() as f64
            + 2.0 * d
            + (2.0 * m + d) * (v as f64 - 3.0)
            + 2.0 * (jf - 1.0)
            + 1.0
            + jf * d / m
    }
}

pub fn chi(m: usize, delta: f64) -> f64 {
    (m as f64 + delta) / (2.0 * m as f64 + delta)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Attachment weights of vertices `1..=v` for the `j`-th edge of vertex `v`.
///
/// `degrees[u - 1]` must hold `d_u(v, j-1)` for `u <= v`. The self-loop weight
/// is `d_v(v, j-1) + 1 + j delta / m`, which makes the weights sum to
/// [`PaParams::normalizer`].
pub fn attachment_weights(degrees: &[u64], v: usize, j: usize, params: &PaParams) -> Result<Vec<f64>> {
    if v < 3 {
        return Err(invalid(format!("growth starts at vertex 3, got v = {v}")));
    }
    if j == 0 || j > params.m {
        return Err(invalid(format!("edge index j = {j} outside 1..={}", params.m)));
    }
    if degrees.len() < v {
        return Err(invalid("degree vector shorter than v"));
    }
    let mut w: Vec<f64> = degrees[..v - 1].iter().map(|&d| d as f64 + params.delta).collect();
    w.push(degrees[v - 1] as f64 + 1.0 + j as f64 * params.delta / params.m as f64);
    Ok(w)
}

/// Fenwick tree over integer degrees; `delta` is added per vertex on query.
#[derive(Debug, Clone)]
struct DegreeIndex {
    tree: Vec<u64>,
}

impl DegreeIndex {
    fn new(capacity: usize) -> Self {
        Self { tree: vec![0; capacity + 1] }
    }

    fn add(&mut self, i: usize, by: u64) {
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += by;
            k += k & k.wrapping_neg();
        }
    }

    fn prefix(&self, count: usize) -> u64 {
        let mut k = count;
        let mut s = 0;
        while k > 0 {
            s += self.tree[k];
            k -= k & k.wrapping_neg();
        }
        s
    }

    /// Smallest 0-based index `i < limit` whose weighted prefix
    /// `sum_{u <= i} (d_u + delta)` exceeds `x`.
    fn search(&self, x: f64, delta: f64, limit: usize) -> usize {
        let mut pos = 0usize;
        let mut acc = 0.0f64;
        let mut step = (self.tree.len() - 1).next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= limit && next < self.tree.len() {
                let block = self.tree[next] as f64 + step as f64 * delta;
                if acc + block <= x {
                    pos = next;
                    acc += block;
                }
            }
            step >>= 1;
        }
        pos.min(limit - 1)
    }
}

/// Incremental state of the attachment process.
///
/// Vertices carry 1-indexed labels in this API. After
/// [`PaGrowth::new`] the graph holds the two seed vertices; call
/// [`PaGrowth::attach_next`] repeatedly (or [`generate`]) to grow it.
#[derive(Debug, Clone)]
pub struct PaGrowth {
    params: PaParams,
    degrees: Vec<u64>,
    index: DegreeIndex,
    edges: Vec<(usize, usize)>,
    /// Vertex currently attaching and how many of its edges are placed.
    v: usize,
    j_done: usize,
}

impl PaGrowth {
    pub fn new(params: PaParams) -> Result<Self> {
        params.validate()?;
        let cap = params.n.max(2);
        let mut degrees = vec![0u64; cap];
        let mut index = DegreeIndex::new(cap);
        let mut edges = Vec::with_capacity(params.initial.edges.len() + params.m * (cap - 2));
        for &(u, v) in &params.initial.edges {
            degrees[u - 1] += 1;
            degrees[v - 1] += 1;
            index.add(u - 1, 1);
            index.add(v - 1, 1);
            edges.push((u.max(v) - 1, u.min(v) - 1));
        }
        Ok(Self { params, degrees, index, edges, v: 3, j_done: 0 })
    }

    pub fn params(&self) -> &PaParams {
        &self.params
    }

    /// Next `(v, j)` to be attached, or `None` once `n` vertices are placed.
    pub fn next_step(&self) -> Option<(usize, usize)> {
        (self.v <= self.params.n).then_some((self.v, self.j_done + 1))
    }

    /// Current degrees `d_u(v, j-1)`, 1-indexed by position `u - 1`.
    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    /// Attachment weights for the pending step.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let (v, j) = self.next_step().ok_or_else(|| invalid("growth finished"))?;
        attachment_weights(&self.degrees, v, j, &self.params)
    }

    /// Draw the endpoint of the pending edge without modifying the graph.
    pub fn sample_endpoint<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let (v, j) = self.next_step().ok_or_else(|| invalid("growth finished"))?;
        let p = &self.params;
        let older = self.index.prefix(v - 1) as f64 + (v - 1) as f64 * p.delta;
        let own = self.degrees[v - 1] as f64 + 1.0 + j as f64 * p.delta / p.m as f64;
        let x = rng.random::<f64>() * (older + own);
        if x >= older {
            return Ok(v);
        }
        Ok(self.index.search(x, p.delta, v - 1) + 1)
    }

    /// Sample and place the pending edge; returns its endpoint.
    pub fn attach_next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let u = self.sample_endpoint(rng)?;
        let v = self.v;
        self.degrees[v - 1] += 1;
        self.degrees[u - 1] += 1;
        self.index.add(v - 1, 1);
        self.index.add(u - 1, 1);
        self.edges.push((v - 1, u - 1));
        self.j_done += 1;
        if self.j_done == self.params.m {
            self.v += 1;
            self.j_done = 0;
        }
        Ok(u)
    }

    pub fn finish(self) -> PaGraph {
        let n = self.params.n;
        let mut degrees = self.degrees;
        degrees.truncate(n);
        PaGraph { graph: MultiGraph { n, edges: self.edges }, degrees, params: self.params }
    }
}

/// A graph produced by [`generate`].
#[derive(Debug, Clone)]
pub struct PaGraph {
    pub params: PaParams,
    pub graph: MultiGraph,
    pub degrees: Vec<u64>,
}

impl PaGraph {
    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

/// Grow a model (a) preferential attachment graph to `params.n` vertices.
pub fn generate(params: &PaParams) -> Result<PaGraph> {
    let mut rng = stream_rng(params.seed, 0);
    let mut growth = PaGrowth::new(params.clone())?;
    while growth.next_step().is_some() {
        growth.attach_next(&mut rng)?;
    }
    Ok(growth.finish())
}

/// Metadata carried by the edge-list header.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphHeader {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
}

const HEADER_TAG: &str = "ppt-ising-graph v1";

/// Write `ppt-ising-graph v1 n=<n> m=<m> delta=<delta>` followed by one
/// 1-indexed `u v` pair per edge.
pub fn write_edge_list<W: Write>(mut out: W, g: &MultiGraph, m: usize, delta: f64) -> Result<()> {
    let mut s = String::with_capacity(16 * g.num_edges() + 64);
    writeln!(s, "{HEADER_TAG} n={} m={} delta={}", g.n(), m, delta).unwrap();
    for &(u, v) in g.edges() {
        writeln!(s, "{} {}", u + 1, v + 1).unwrap();
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_edge_list<R: BufRead>(input: R) -> Result<(GraphHeader, MultiGraph)> {
    let mut lines = input.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let first = first?;
    let rest = first
        .strip_prefix(HEADER_TAG)
        .ok_or_else(|| Error::Parse { line: 1, msg: format!("expected header `{HEADER_TAG} ...`") })?;
    let mut n = None;
    let mut m = None;
    let mut delta = None;
    for tok in rest.split_whitespace() {
        let perr = |msg: String| Error::Parse { line: 1, msg };
        match tok.split_once('=') {
            Some(("n", x)) => n = Some(x.parse::<usize>().map_err(|e| perr(e.to_string()))?),
            Some(("m", x)) => m = Some(x.parse::<usize>().map_err(|e| perr(e.to_string()))?),
            Some(("delta", x)) => delta = Some(x.parse::<f64>().map_err(|e| perr(e.to_string()))?),
            _ => return Err(perr(format!("unexpected header field `{tok}`"))),
        }
    }
    let missing = |f: &str| Error::Parse { line: 1, msg: format!("header lacks `{f}`") };
    let header = GraphHeader {
        n: n.ok_or_else(|| missing("n"))?,
        m: m.ok_or_else(|| missing("m"))?,
        delta: delta.ok_or_else(|| missing("delta"))?,
    };
    let mut g = MultiGraph::new(header.n);
    for (i, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: i + 1, msg };
        let mut it = line.split_whitespace();
        let mut endpoint = || -> Result<usize> {
            let tok = it.next().ok_or_else(|| perr("expected `u v`".into()))?;
            let x: usize = tok.parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
            if x == 0 || x > header.n {
                return Err(perr(format!("vertex {x} outside 1..={}", header.n)));
            }
            Ok(x - 1)
        };
        let u = endpoint()?;
        let v = endpoint()?;
        g.add_edge(u, v)?;
    }
    Ok((header, g))
}
