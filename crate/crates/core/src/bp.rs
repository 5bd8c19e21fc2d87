//! Belief propagation (cavity fields) on finite multigraphs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::MultiGraph;
use crate::ising::{cavity_message, Couplings, IsingParams};

/// Message value standing in for an infinite field under plus initialisation.
pub const PLUS_CAP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Every message starts at its vertex field.
    Free,
    /// Every message starts at [`PLUS_CAP`].
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Jacobi sweeps: every message is recomputed from the previous sweep.
    Synchronous,
    /// Gauss-Seidel sweeps in directed-edge order.
    Sequential,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpConfig {
    pub init: Init,
    pub max_iters: usize,
    pub tol: f64,
    /// Weight of the old message in each update, in `[0, 1)`.
    pub damping: f64,
    pub schedule: Schedule,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self { init: Init::Free, max_iters: 10_000, tol: 1e-12, damping: 0.0, schedule: Schedule::Synchronous }
    }
}

impl BpConfig {
    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(invalid(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        Ok(())
    }
}

/// Converged (or last) cavity fields.
///
/// Directed edge `2k` carries the field from `pairs[k].0` to `pairs[k].1`,
/// directed edge `2k + 1` the reverse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MessageSet {
    pub pairs: Vec<(usize, usize, u32)>,
    pub messages: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl MessageSet {
    /// Field sent from `u` to `v`, if they are adjacent.
    pub fn message(&self, u: usize, v: usize) -> Option<f64> {
        let key = if u > v { (u, v) } else { (v, u) };
        let k = self.pairs.binary_search_by(|&(a, b, _)| (a, b).cmp(&key)).ok()?;
        Some(if u > v { self.messages[2 * k] } else { self.messages[2 * k + 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetheResult {
    pub pressure: f64,
    pub magnetisation: f64,
    pub internal_energy: f64,
    pub converged: bool,
}

/// Incoming directed edges per vertex: `(directed edge index, pair index)`.
fn incoming(c: &Couplings) -> Vec<Vec<(usize, usize)>> {
    let mut inc = vec![Vec::new(); c.n];
    for (k, &(u, v, _)) in c.pairs.iter().enumerate() {
        inc[v].push((2 * k, k));
        inc[u].push((2 * k + 1, k));
    }
    inc
}

/// Iterate `h_{u->v} = B_u + sum_{w in N(u) \ v} arctanh(tanh(beta_e) tanh h_{w->u})`
/// until the largest change in a sweep drops below `cfg.tol`.
///
/// Parallel edges between `u` and `v` form one coupling of strength
/// `k beta`. Non-convergence is reported through `converged`, not as an
/// error.
pub fn bp_solve(g: &MultiGraph, p: &IsingParams, cfg: &BpConfig) -> Result<MessageSet> {
    p.validate(g.n())?;
    cfg.validate()?;
    let c = Couplings::new(g);
    let t: Vec<f64> = c.pairs.iter().map(|&(_, _, k)| (k as f64 * p.beta).tanh()).collect();
    let inc = incoming(&c);
    // (sender, receiver-side pair, sender's incoming total excludes this pair)
    let senders: Vec<(usize, usize)> = c
        .pairs
        .iter()
        .enumerate()
        .flat_map(|(k, &(u, v, _))| [(u, k), (v, k)])
        .collect();
    let mut h: Vec<f64> = match cfg.init {
        Init::Free => senders.iter().map(|&(u, _)| p.field_at(u)).collect(),
        Init::Plus => vec![PLUS_CAP; senders.len()],
    };
    let update = |h: &[f64], e: usize| -> f64 {
        let (u, k) = senders[e];
        let mut s = p.field_at(u);
        for &(d, kk) in &inc[u] {
            if kk != k {
                s += cavity_message(t[kk], h[d]);
            }
        }
        s
    };
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        residual = 0.0;
        match cfg.schedule {
            Schedule::Synchronous => {
                let next: Vec<f64> = (0..h.len())
                    .into_par_iter()
                    .map(|e| cfg.damping * h[e] + (1.0 - cfg.damping) * update(&h, e))
                    .collect();
                residual = h.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                h = next;
            }
            Schedule::Sequential => {
                for e in 0..h.len() {
                    let new = cfg.damping * h[e] + (1.0 - cfg.damping) * update(&h, e);
                    residual = residual.max((new - h[e]).abs());
                    h[e] = new;
                }
            }
        }
        if residual < cfg.tol {
            break;
        }
    }
    Ok(MessageSet { pairs: c.pairs, messages: h, iterations, residual, converged: residual < cfg.tol })
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Bethe pressure, magnetisation and internal energy from a message set.
///
/// Pressure per vertex is the sum of vertex terms minus edge terms, with
/// `beta` per self-loop added back.
pub fn bethe_pressure(g: &MultiGraph, msgs: &MessageSet, p: &IsingParams) -> Result<BetheResult> {
    p.validate(g.n())?;
    let c = Couplings::new(g);
    if c.pairs != msgs.pairs {
        return Err(invalid("message set was computed on a different graph"));
    }
    let n = g.n();
    let betas: Vec<f64> = c.pairs.iter().map(|&(_, _, k)| k as f64 * p.beta).collect();
    let t: Vec<f64> = betas.iter().map(|b| b.tanh()).collect();
    let inc = incoming(&c);
    let x: Vec<f64> = msgs.messages.iter().map(|h| h.tanh()).collect();

    let mut vertex_total = 0.0;
    let mut mag_total = 0.0;
    for (v, inc_v) in inc.iter().enumerate() {
        let b = p.field_at(v);
        let (mut plus, mut minus, mut cosh, mut local) = (b, -b, 0.0, b);
        for &(d, k) in inc_v {
            plus += (1.0 + t[k] * x[d]).ln();
            minus += (1.0 - t[k] * x[d]).ln();
            cosh += betas[k].cosh().ln();
            local += cavity_message(t[k], msgs.messages[d]);
        }
        vertex_total += cosh + log_add_exp(plus, minus);
        mag_total += local.tanh();
    }
    let mut edge_total = 0.0;
    let mut corr_total = 0.0;
    for (k, &(_, _, mult)) in c.pairs.iter().enumerate() {
        let xy = x[2 * k] * x[2 * k + 1];
        edge_total += betas[k].cosh().ln() + (1.0 + t[k] * xy).ln();
        corr_total += mult as f64 * (t[k] + xy) / (1.0 + t[k] * xy);
    }
    let loops = c.self_loops as f64;
    Ok(BetheResult {
        pressure: (vertex_total - edge_total + loops * p.beta) / n as f64,
        magnetisation: mag_total / n as f64,
        internal_energy: -(corr_total + loops) / n as f64,
        converged: msgs.converged,
    })
}

/// `<s_u s_v>` across one coupling from the two cavity fields.
///
/// `beta` is the coupling of the edge (multiply by the multiplicity for
/// parallel edges).
pub fn edge_correlation(msgs: &MessageSet, u: usize, v: usize, beta: f64) -> Result<f64> {
    let a = msgs.message(u, v).ok_or_else(|| invalid(format!("no edge between {u} and {v}")))?;
    let b = msgs.message(v, u).unwrap_or(a);
    let t = beta.tanh();
    let xy = a.tanh() * b.tanh();
    Ok((t + xy) / (1.0 + t * xy))
}

/// Per-vertex magnetisations `tanh(B_v + sum_w arctanh(t tanh h_{w->v}))`.
pub fn marginals(g: &MultiGraph, msgs: &MessageSet, p: &IsingParams) -> Vec<f64> {
    let c = Couplings::new(g);
    let inc = incoming(&c);
    (0..g.n())
        .map(|v| {
            let local = p.field_at(v)
                + inc[v]
                    .iter()
                    .map(|&(d, k)| cavity_message((c.pairs[k].2 as f64 * p.beta).tanh(), msgs.messages[d]))
                    .sum::<f64>();
            local.tanh()
        })
        .collect()
}
