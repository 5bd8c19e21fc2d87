//! Heat-bath Glauber dynamics and thermodynamic integration of the pressure.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::MultiGraph;
use crate::ising::{Couplings, IsingParams};
use crate::rng::stream_rng;
use crate::stats::{batch_means, simpson, Estimate};
use crate::fmt_f64;

/// Number of batches used for batch-means error bars.
pub const BATCHES: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub replicates: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { sweeps: 20_000, burn_in: 2_000, thin: 1, seed: 1, replicates: 4 }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.sweeps {
            return Err(invalid(format!("burn_in ({}) must be below sweeps ({})", self.burn_in, self.sweeps)));
        }
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(invalid("need at least one replicate"));
        }
        Ok(())
    }
}

/// One measurement of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub sweep: usize,
    pub magnetisation: f64,
    pub internal_energy: f64,
    /// Mean of `s_u s_v` over all edges, self-loops counting `1`.
    pub edge_corr_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcEstimate {
    pub magnetisation: Estimate,
    pub internal_energy: Estimate,
    pub edge_corr_mean: Estimate,
    /// Measurements averaged across replicates, sweep by sweep.
    pub series: Vec<Measurement>,
}

/// A single Glauber chain with all spins stored as `+-1`.
#[derive(Debug, Clone)]
pub struct GlauberChain {
    offsets: Vec<usize>,
    /// `(neighbour, coupling)` in CSR layout.
    nbrs: Vec<(u32, f64)>,
    fields: Vec<f64>,
    pairs: Vec<(usize, usize, u32)>,
    edges: usize,
    self_loops: usize,
    spins: Vec<i8>,
}

impl GlauberChain {
    /// Chain started from all spins `+1`.
    pub fn new(g: &MultiGraph, p: &IsingParams) -> Result<Self> {
        p.validate(g.n())?;
        let c = Couplings::new(g);
        let mut offsets = vec![0; g.n() + 1];
        for list in c.adj.iter().enumerate() {
            offsets[list.0 + 1] = offsets[list.0] + list.1.len();
        }
        let mut nbrs = Vec::with_capacity(offsets[g.n()]);
        for list in &c.adj {
            for &(w, k) in list {
                nbrs.push((w as u32, c.pairs[k].2 as f64 * p.beta));
            }
        }
        Ok(Self {
            offsets,
            nbrs,
            fields: (0..g.n()).map(|v| p.field_at(v)).collect(),
            pairs: c.pairs,
            edges: g.num_edges(),
            self_loops: c.self_loops,
            spins: vec![1; g.n()],
        })
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// One heat-bath update of every vertex in index order.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for v in 0..self.spins.len() {
            let mut local = self.fields[v];
            for &(w, j) in &self.nbrs[self.offsets[v]..self.offsets[v + 1]] {
                local += j * self.spins[w as usize] as f64;
            }
            let up = 1.0 / (1.0 + (-2.0 * local).exp());
            self.spins[v] = if rng.random::<f64>() < up { 1 } else { -1 };
        }
    }

    pub fn measure(&self, sweep: usize) -> Measurement {
        let n = self.spins.len() as f64;
        let mag = self.spins.iter().map(|&s| s as f64).sum::<f64>() / n;
        let mut corr = self.self_loops as f64;
        for &(u, v, k) in &self.pairs {
            corr += k as f64 * (self.spins[u] * self.spins[v]) as f64;
        }
        let edge_corr_mean = if self.edges == 0 { 0.0 } else { corr / self.edges as f64 };
        Measurement { sweep, magnetisation: mag, internal_energy: -corr / n, edge_corr_mean }
    }
}

fn run_replicate(g: &MultiGraph, p: &IsingParams, cfg: &McmcConfig, k: usize) -> Result<Vec<Measurement>> {
    let mut rng = stream_rng(cfg.seed.wrapping_add(k as u64), 0);
    let mut chain = GlauberChain::new(g, p)?;
    let mut out = Vec::with_capacity((cfg.sweeps - cfg.burn_in) / cfg.thin + 1);
    for s in 1..=cfg.sweeps {
        chain.sweep(&mut rng);
        if s > cfg.burn_in && (s - cfg.burn_in).is_multiple_of(cfg.thin) {
            out.push(chain.measure(s));
        }
    }
    Ok(out)
}

/// Run `cfg.replicates` independent heat-bath chains and average their
/// batch-means estimates.
///
/// Replicate `k` is seeded with `seed + k`. Self-loops do not affect the
/// dynamics; parallel edges act as a multiplied coupling.
pub fn glauber_run(g: &MultiGraph, p: &IsingParams, cfg: &McmcConfig) -> Result<McmcEstimate> {
    cfg.validate()?;
    p.validate(g.n())?;
    let runs: Vec<Vec<Measurement>> =
        (0..cfg.replicates).into_par_iter().map(|k| run_replicate(g, p, cfg, k)).collect::<Result<_>>()?;
    let combine = |f: fn(&Measurement) -> f64| {
        let per: Vec<Estimate> = runs.iter().map(|r| batch_means(&r.iter().map(f).collect::<Vec<_>>(), BATCHES)).collect();
        let r = per.len() as f64;
        Estimate {
            mean: per.iter().map(|e| e.mean).sum::<f64>() / r,
            err: per.iter().map(|e| e.err * e.err).sum::<f64>().sqrt() / r,
        }
    };
    let r = runs.len() as f64;
    let series = (0..runs[0].len())
        .map(|i| Measurement {
            sweep: runs[0][i].sweep,
            magnetisation: runs.iter().map(|x| x[i].magnetisation).sum::<f64>() / r,
            internal_energy: runs.iter().map(|x| x[i].internal_energy).sum::<f64>() / r,
            edge_corr_mean: runs.iter().map(|x| x[i].edge_corr_mean).sum::<f64>() / r,
        })
        .collect();
    Ok(McmcEstimate {
        magnetisation: combine(|m| m.magnetisation),
        internal_energy: combine(|m| m.internal_energy),
        edge_corr_mean: combine(|m| m.edge_corr_mean),
        series,
    })
}

pub fn write_series_csv<W: Write>(mut out: W, series: &[Measurement]) -> Result<()> {
    writeln!(out, "sweep,magnetisation,internal_energy,edge_corr_mean")?;
    for m in series {
        writeln!(
            out,
            "{},{},{},{}",
            m.sweep,
            fmt_f64(m.magnetisation),
            fmt_f64(m.internal_energy),
            fmt_f64(m.edge_corr_mean)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub pressure: f64,
    pub err: f64,
    /// Edge-correlation averages at each grid point.
    pub edge_corr: Vec<Estimate>,
}

/// `psi_n(beta, B)` at the last grid point by integrating
/// `d psi / d beta = (|E|/n) <edge correlation>` from `beta = 0`, where
/// `psi_n(0, B) = (1/n) sum_v log(2 cosh B_v)`.
///
/// The grid must start at 0, increase, and hold at least three points.
/// Grid point `i` uses seeds offset by `i * replicates`.
pub fn pressure_by_integration(g: &MultiGraph, field: &IsingParams, beta_grid: &[f64], cfg: &McmcConfig) -> Result<PressureEstimate> {
    if beta_grid.len() < 3 {
        return Err(invalid("beta grid needs at least three points"));
    }
    if beta_grid[0] != 0.0 {
        return Err(invalid("beta grid must start at 0"));
    }
    let n = g.n() as f64;
    let anchor = (0..g.n()).map(|v| (2.0 * field.field_at(v).cosh()).ln()).sum::<f64>() / n;
    let scale = g.num_edges() as f64 / n;
    let mut edge_corr = Vec::with_capacity(beta_grid.len());
    for (i, &beta) in beta_grid.iter().enumerate() {
        let p = IsingParams { beta, field: field.field.clone() };
        let c = McmcConfig { seed: cfg.seed.wrapping_add((i * cfg.replicates) as u64), ..cfg.clone() };
        edge_corr.push(glauber_run(g, &p, &c)?.edge_corr_mean);
    }
    let ys: Vec<f64> = edge_corr.iter().map(|e| scale * e.mean).collect();
    let integral = simpson(beta_grid, &ys)?;
    // Simpson is linear in the ordinates, so errors propagate through its weights
    let mut var = 0.0;
    for (i, e) in edge_corr.iter().enumerate() {
        let mut unit = vec![0.0; beta_grid.len()];
        unit[i] = 1.0;
        let w = simpson(beta_grid, &unit)?;
        var += (w * scale * e.err).powi(2);
    }
    Ok(PressureEstimate { pressure: anchor + integral, err: var.sqrt(), edge_corr })
}
