//! Brute-force Boltzmann sums on small graphs and exact tree recursions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MultiGraph;
use crate::ising::{cavity_message, Couplings, IsingParams};

/// Largest graph accepted by [`enumerate`].
pub const MAX_ENUMERATION_VERTICES: usize = 24;

/// Spins above this index are fixed per work chunk; the rest are swept by a
/// Gray code inside the chunk.
const CHUNK_BITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCorrelation {
    pub u: usize,
    pub v: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub log_z: f64,
    /// `<s_v>` per vertex.
    pub marginals: Vec<f64>,
    /// `<s_u s_v>` for every non-loop edge, in edge order (parallel edges
    /// repeat).
    pub pair_correlations: Vec<EdgeCorrelation>,
    /// `log_z / n`.
    pub pressure: f64,
}

impl ExactResult {
    pub fn magnetisation(&self) -> f64 {
        self.marginals.iter().sum::<f64>() / self.marginals.len() as f64
    }

    /// `-(1/n) sum_edges <s_u s_v>`, self-loops counting `1` each.
    pub fn internal_energy(&self, g: &MultiGraph) -> f64 {
        let loops = g.edges().iter().filter(|(u, v)| u == v).count() as f64;
        let s: f64 = self.pair_correlations.iter().map(|c| c.value).sum();
        -(s + loops) / g.n() as f64
    }
}

/// Partial sums over a block of configurations, shifted by `shift`.
#[derive(Debug, Clone)]
struct Partial {
    shift: f64,
    z: f64,
    spin: Vec<f64>,
    pair: Vec<f64>,
}

impl Partial {
    fn rescaled(mut self, to: f64) -> Self {
        let s = (self.shift - to).exp();
        self.z *= s;
        self.spin.iter_mut().for_each(|x| *x *= s);
        self.pair.iter_mut().for_each(|x| *x *= s);
        self.shift = to;
        self
    }

    fn merge(a: Self, b: Self) -> Self {
        let to = a.shift.max(b.shift);
        let mut a = a.rescaled(to);
        let b = b.rescaled(to);
        a.z += b.z;
        a.spin.iter_mut().zip(&b.spin).for_each(|(x, y)| *x += y);
        a.pair.iter_mut().zip(&b.pair).for_each(|(x, y)| *x += y);
        a
    }
}

/// Pairwise reduction in a fixed tree order.
fn tree_reduce(mut parts: Vec<Partial>) -> Partial {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(Partial::merge(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop().unwrap()
}

struct Model {
    n: usize,
    fields: Vec<f64>,
    /// `(u, v, k beta)`.
    pairs: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl Model {
    fn new(c: &Couplings, p: &IsingParams) -> Self {
        let fields = (0..c.n).map(|v| p.field_at(v)).collect();
        let pairs: Vec<_> = c.pairs.iter().map(|&(u, v, k)| (u, v, k as f64 * p.beta)).collect();
        let mut adj = vec![Vec::new(); c.n];
        for &(u, v, j) in &pairs {
            adj[u].push((v, j));
            adj[v].push((u, j));
        }
        Self { n: c.n, fields, pairs, adj }
    }

    #[inline]
    fn spin(bits: u64, v: usize) -> f64 {
        if bits >> v & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    fn energy(&self, bits: u64) -> f64 {
        let mut e = 0.0;
        for v in 0..self.n {
            e += self.fields[v] * Self::spin(bits, v);
        }
        for &(u, v, j) in &self.pairs {
            e += j * Self::spin(bits, u) * Self::spin(bits, v);
        }
        e
    }

    /// Energy change when spin `v` flips.
    #[inline]
    fn flip_delta(&self, bits: u64, v: usize) -> f64 {
        let s = Self::spin(bits, v);
        let mut local = self.fields[v];
        for &(w, j) in &self.adj[v] {
            local += j * Self::spin(bits, w);
        }
        -2.0 * s * local
    }

    /// Visit every configuration of the low `low` spins (high bits fixed to
    /// `base`) in Gray-code order with its energy.
    fn sweep(&self, base: u64, low: usize, mut f: impl FnMut(u64, f64)) {
        let mut bits = base;
        let mut e = self.energy(bits);
        f(bits, e);
        for i in 1u64..(1u64 << low) {
            let v = i.trailing_zeros() as usize;
            e += self.flip_delta(bits, v);
            bits ^= 1 << v;
            f(bits, e);
        }
    }

    fn chunk(&self, base: u64, low: usize) -> Partial {
        let mut shift = f64::NEG_INFINITY;
        self.sweep(base, low, |_, e| shift = shift.max(e));
        let mut part = Partial { shift, z: 0.0, spin: vec![0.0; self.n], pair: vec![0.0; self.pairs.len()] };
        self.sweep(base, low, |bits, e| {
            let w = (e - shift).exp();
            part.z += w;
            for v in 0..self.n {
                part.spin[v] += w * Self::spin(bits, v);
            }
            for (k, &(u, v, _)) in self.pairs.iter().enumerate() {
                part.pair[k] += w * Self::spin(bits, u) * Self::spin(bits, v);
            }
        });
        part
    }
}

/// Sum the Boltzmann weights of all `2^n` spin configurations.
///
/// Parallel edges act as a multiplied coupling; a self-loop adds `beta` to
/// `log_z` and nothing else. The configuration space is split into fixed
/// chunks which are reduced pairwise in a fixed order, so the result does not
/// depend on the number of worker threads.
pub fn enumerate(g: &MultiGraph, p: &IsingParams) -> Result<ExactResult> {
    let n = g.n();
    if n > MAX_ENUMERATION_VERTICES {
        return Err(Error::TooLarge { n, max: MAX_ENUMERATION_VERTICES });
    }
    p.validate(n)?;
    let c = Couplings::new(g);
    let model = Model::new(&c, p);
    let high = n.saturating_sub(CHUNK_BITS);
    let low = n - high;
    let parts: Vec<Partial> = (0..1u64 << high)
        .into_par_iter()
        .map(|h| model.chunk(h << low, low))
        .collect();
    let total = tree_reduce(parts);
    let log_z = total.shift + total.z.ln() + c.self_loops as f64 * p.beta;
    let marginals = total.spin.iter().map(|s| s / total.z).collect();
    let pair_correlations = g
        .edges()
        .iter()
        .zip(&c.edge_pair)
        .filter_map(|(&(u, v), k)| k.map(|k| EdgeCorrelation { u, v, value: total.pair[k] / total.z }))
        .collect();
    Ok(ExactResult { log_z, marginals, pair_correlations, pressure: log_z / n as f64 })
}

/// Joint law of the spins in `subset`, by brute force.
///
/// Entry `i` is the probability that `s_{subset[k]} = +1` exactly when bit `k`
/// of `i` is set.
pub fn subset_distribution(g: &MultiGraph, p: &IsingParams, subset: &[usize]) -> Result<Vec<f64>> {
    let n = g.n();
    if n > MAX_ENUMERATION_VERTICES {
        return Err(Error::TooLarge { n, max: MAX_ENUMERATION_VERTICES });
    }
    p.validate(n)?;
    let model = Model::new(&Couplings::new(g), p);
    let energies: Vec<f64> = (0..1u64 << n).map(|b| model.energy(b)).collect();
    let shift = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut dist = vec![0.0; 1 << subset.len()];
    let mut z = 0.0;
    for (bits, e) in energies.iter().enumerate() {
        let w = (e - shift).exp();
        z += w;
        let mut key = 0;
        for (k, &v) in subset.iter().enumerate() {
            key |= (bits >> v & 1) << k;
        }
        dist[key] += w;
    }
    dist.iter_mut().for_each(|x| *x /= z);
    Ok(dist)
}

/// Boundary condition at the truncation depth of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Boundary vertices keep their ordinary field.
    Free,
    /// Boundary vertices are clamped to `+1`.
    Plus,
}

/// How [`boundary_conditioned_root_marginal`] evaluates the truncated tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeMethod {
    /// Brute force over the unclamped vertices (at most 24).
    Enumerate,
    /// Leaf-to-root cavity recursion.
    Recursion,
}

/// `<s_root>` on `tree` truncated at `depth`, with the vertices at distance
/// exactly `depth` either free or clamped to `+1`.
pub fn boundary_conditioned_root_marginal(
    tree: &MultiGraph,
    root: usize,
    p: &IsingParams,
    boundary: Boundary,
    depth: usize,
    method: TreeMethod,
) -> Result<f64> {
    if !tree.is_tree() {
        return Err(Error::NotATree);
    }
    if root >= tree.n() {
        return Err(Error::VertexOutOfRange { vertex: root, n: tree.n() });
    }
    p.validate(tree.n())?;
    let ball = tree.neighborhood(root, depth)?;
    let dist = depths_from(&ball.graph, 0);
    let at_boundary = |v: usize| boundary == Boundary::Plus && dist[v] == depth;
    if at_boundary(0) {
        return Ok(1.0);
    }
    match method {
        TreeMethod::Recursion => {
            let fields: Vec<f64> = ball.vertices.iter().map(|&v| p.field_at(v)).collect();
            let t = p.beta.tanh();
            let h = tree_fields(&ball.graph, 0, &fields, t, &|v| at_boundary(v));
            Ok(h.tanh())
        }
        TreeMethod::Enumerate => {
            // clamped vertices become a field beta on their free neighbours
            let keep: Vec<usize> = (0..ball.graph.n()).filter(|&v| !at_boundary(v)).collect();
            let mut local = vec![usize::MAX; ball.graph.n()];
            for (i, &v) in keep.iter().enumerate() {
                local[v] = i;
            }
            let mut fields: Vec<f64> = keep.iter().map(|&v| p.field_at(ball.vertices[v])).collect();
            let mut reduced = MultiGraph::new(keep.len());
            for &(u, v) in ball.graph.edges() {
                match (at_boundary(u), at_boundary(v)) {
                    (false, false) => reduced.add_edge(local[u], local[v])?,
                    (true, false) => fields[local[v]] += p.beta,
                    (false, true) => fields[local[u]] += p.beta,
                    (true, true) => {}
                }
            }
            let res = enumerate(&reduced, &IsingParams::per_vertex(p.beta, fields))?;
            Ok(res.marginals[local[0]])
        }
    }
}

fn depths_from(g: &MultiGraph, root: usize) -> Vec<usize> {
    let adj = g.adjacency();
    let mut d = vec![usize::MAX; g.n()];
    d[root] = 0;
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        for &(w, _) in &adj[u] {
            if d[w] == usize::MAX {
                d[w] = d[u] + 1;
                stack.push(w);
            }
        }
    }
    d
}

/// Effective field at `root` of a tree: `h_v = B_v + sum_children
/// arctanh(t tanh h_child)`, with clamped vertices at `h = +inf`.
fn tree_fields(g: &MultiGraph, root: usize, fields: &[f64], t: f64, clamped: &dyn Fn(usize) -> bool) -> f64 {
    let adj = g.adjacency();
    // iterative post-order
    let mut order = Vec::with_capacity(g.n());
    let mut parent = vec![usize::MAX; g.n()];
    let mut stack = vec![root];
    parent[root] = root;
    while let Some(u) = stack.pop() {
        order.push(u);
        for &(w, _) in &adj[u] {
            if parent[w] == usize::MAX {
                parent[w] = u;
                stack.push(w);
            }
        }
    }
    let mut h = fields.to_vec();
    let mut msg_sum = vec![0.0; g.n()];
    for &u in order.iter().rev() {
        let hu = if clamped(u) { f64::INFINITY } else { h[u] + msg_sum[u] };
        h[u] = hu;
        if u != root {
            let up = if hu.is_infinite() { t.atanh() } else { cavity_message(t, hu) };
            msg_sum[parent[u]] += up;
        }
    }
    h[root]
}

/// Root field of a tree with free boundary, exact by recursion.
pub fn tree_root_field(tree: &MultiGraph, root: usize, p: &IsingParams) -> Result<f64> {
    if !tree.is_tree() {
        return Err(Error::NotATree);
    }
    p.validate(tree.n())?;
    let fields: Vec<f64> = (0..tree.n()).map(|v| p.field_at(v)).collect();
    Ok(tree_fields(tree, root, &fields, p.beta.tanh(), &|_| false))
}
