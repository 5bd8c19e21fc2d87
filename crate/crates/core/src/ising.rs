//! Ising model parameters and the weighted simple-graph view used by solvers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::MultiGraph;

/// External field: one value for every vertex or a per-vertex vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Field {
    Uniform(f64),
    PerVertex(Vec<f64>),
}

/// Inverse temperature and external field of a Boltzmann distribution
/// `exp(beta * sum_edges s_u s_v + sum_v B_v s_v) / Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    pub beta: f64,
    pub field: Field,
}

impl IsingParams {
    pub fn uniform(beta: f64, b: f64) -> Self {
        Self { beta, field: Field::Uniform(b) }
    }

    pub fn per_vertex(beta: f64, b: Vec<f64>) -> Self {
        Self { beta, field: Field::PerVertex(b) }
    }

    pub fn field_at(&self, v: usize) -> f64 {
        match &self.field {
            Field::Uniform(b) => *b,
            Field::PerVertex(bs) => bs[v],
        }
    }

    /// Checks `beta >= 0`, finite values and the field length against `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(invalid(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        match &self.field {
            Field::Uniform(b) if !b.is_finite() => Err(invalid("field must be finite")),
            Field::PerVertex(bs) if bs.len() != n => Err(invalid(format!(
                "per-vertex field has {} entries for {} vertices",
                bs.len(),
                n
            ))),
            Field::PerVertex(bs) if bs.iter().any(|b| !b.is_finite()) => Err(invalid("field must be finite")),
            _ => Ok(()),
        }
    }
}

/// A multigraph with parallel edges merged into integer multiplicities and
/// self-loops split off.
///
/// `k` parallel edges between `u` and `v` act as a single coupling `k beta`;
/// each self-loop adds the constant `beta` to the Hamiltonian.
#[derive(Debug, Clone)]
pub struct Couplings {
    pub n: usize,
    /// `(u, v, multiplicity)` with `u > v`, sorted.
    pub pairs: Vec<(usize, usize, u32)>,
    /// For every edge of the source graph, the index of its pair
    /// (`None` for self-loops).
    pub edge_pair: Vec<Option<usize>>,
    pub self_loops: usize,
    /// `(neighbour, pair index)` lists.
    pub adj: Vec<Vec<(usize, usize)>>,
}

impl Couplings {
    pub fn new(g: &MultiGraph) -> Self {
        let mut keyed: Vec<(usize, usize, usize)> = g
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, &(u, v))| u != v)
            .map(|(e, &(u, v))| (u, v, e))
            .collect();
        keyed.sort_unstable();
        let mut pairs: Vec<(usize, usize, u32)> = Vec::new();
        let mut edge_pair = vec![None; g.num_edges()];
        for (u, v, e) in keyed {
            match pairs.last_mut() {
                Some(last) if last.0 == u && last.1 == v => last.2 += 1,
                _ => pairs.push((u, v, 1)),
            }
            edge_pair[e] = Some(pairs.len() - 1);
        }
        let mut adj = vec![Vec::new(); g.n()];
        for (k, &(u, v, _)) in pairs.iter().enumerate() {
            adj[u].push((v, k));
            adj[v].push((u, k));
        }
        let self_loops = g.edges().iter().filter(|(u, v)| u == v).count();
        Self { n: g.n(), pairs, edge_pair, self_loops, adj }
    }
}

/// `arctanh(t * tanh(h))` computed as `0.5 * ln((1 + t x) / (1 - t x))`.
///
/// `t = tanh(coupling)` must lie in `[0, 1)`.
#[inline]
pub fn cavity_message(t: f64, h: f64) -> f64 {
    let x = t * h.tanh();
    0.5 * ((1.0 + x) / (1.0 - x)).ln()
}
