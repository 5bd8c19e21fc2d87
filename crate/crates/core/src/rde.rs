//! Cavity fields on the Polya point tree by depth-truncated recursion, and
//! Monte Carlo estimates of the limiting pressure, magnetisation and internal
//! energy.
//!
//! A field "at depth `d`" is computed on the subtree explored `d` generations
//! below the node, with the nodes at the cut either left at the field `B`
//! (free) or pinned at [`PLUS_CAP`] (plus). Tree sampling never depends on
//! `beta` or `B`, so runs with the same seed share their trees.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::PLUS_CAP;
use crate::error::{invalid, Error, Result};
use crate::ising::cavity_message;
use crate::ppt::{Label, NodeType, PptParams, PptTree, TypedNode};
use crate::rng::{stream_rng, SimRng};
use crate::stats::{ks_two_sample, mean_se, Estimate, TestOutcome};

/// Default limit on the nodes visited for one replicate. Nodes are never
/// stored, so this bounds time rather than memory.
pub const DEFAULT_WORK_CAP: usize = 2_000_000_000;

/// Inverse temperature, field and truncation of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdeConfig {
    pub beta: f64,
    pub field: f64,
    pub depth: usize,
    pub replicates: usize,
    pub seed: u64,
    pub node_cap: usize,
    /// Wall-clock limit for the run.
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

impl RdeConfig {
    pub fn new(beta: f64, field: f64, depth: usize, replicates: usize, seed: u64) -> Self {
        Self { beta, field, depth, replicates, seed, node_cap: DEFAULT_WORK_CAP, deadline: None }
    }

    pub fn with_field(self, field: f64) -> Self {
        Self { field, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn with_deadline(self, deadline: Instant) -> Self {
        Self { deadline: Some(deadline), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(invalid(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !self.field.is_finite() {
            return Err(invalid("field must be finite"));
        }
        if self.depth < 1 {
            return Err(invalid("depth must be at least 1"));
        }
        if self.replicates < 2 {
            return Err(invalid("need at least two replicates"));
        }
        Ok(())
    }
}

/// Free and plus values of a quantity computed on the same tree.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bracket {
    pub free: f64,
    pub plus: f64,
}

impl Bracket {
    fn leaf(field: f64) -> Self {
        Self { free: field, plus: PLUS_CAP }
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self { free: f(self.free), plus: f(self.plus) }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.free + self.plus)
    }
}

/// Root field of one sampled tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdeSample {
    pub age: f64,
    pub label: Label,
    pub h_free: f64,
    pub h_plus: f64,
    pub depth: usize,
}

struct Walker<'a> {
    params: &'a PptParams,
    t: f64,
    field: f64,
    cap: usize,
    nodes: usize,
    deadline: Option<Instant>,
    next_clock_check: usize,
}

impl Walker<'_> {
    fn new<'a>(params: &'a PptParams, cfg: &RdeConfig) -> Walker<'a> {
        Walker {
            params,
            t: cfg.beta.tanh(),
            field: cfg.field,
            cap: cfg.node_cap,
            nodes: 0,
            deadline: cfg.deadline,
            next_clock_check: 0,
        }
    }

    fn charge(&mut self, k: usize) -> Result<()> {
        self.nodes += k;
        if self.nodes > self.cap {
            return Err(Error::NodeCapExceeded { cap: self.cap });
        }
        if let Some(deadline) = self.deadline {
            if self.nodes >= self.next_clock_check {
                self.next_clock_check = self.nodes + (1 << 16);
                if Instant::now() > deadline {
                    return Err(Error::DeadlineExceeded);
                }
            }
        }
        Ok(())
    }

    /// Field of `node` at depth `levels`.
    fn field_of(&mut self, node: &TypedNode, levels: usize, rng: &mut SimRng) -> Result<Bracket> {
        if levels == 0 {
            return Ok(Bracket::leaf(self.field));
        }
        if levels == 1 {
            // children sit on the cut, only their number matters
            let k = self.params.sample_child_count(node, rng)?;
            self.charge(k)?;
            let leaf = Bracket::leaf(self.field).map(|h| cavity_message(self.t, h));
            return Ok(Bracket { free: self.field + k as f64 * leaf.free, plus: self.field + k as f64 * leaf.plus });
        }
        // children are generated and consumed one at a time
        let old = self.params.old_children(node.label);
        let young = self.params.sample_young_count(node, rng)?;
        self.charge(old + young)?;
        let mut h = Bracket { free: self.field, plus: self.field };
        for i in 0..old + young {
            let kid = if i < old {
                let age = self.params.sample_old_age(node.age, rng);
                self.params.typed(NodeType { age, label: Label::Old }, rng)
            } else {
                let age = self.params.sample_young_age(node.age, rng);
                self.params.typed(NodeType { age, label: Label::Young }, rng)
            };
            let c = self.field_of(&kid, levels - 1, rng)?;
            h.free += cavity_message(self.t, c.free);
            h.plus += cavity_message(self.t, c.plus);
        }
        Ok(h)
    }

    /// Fields of every child of `node`, each at depth `levels - 1`.
    fn child_fields(&mut self, node: &TypedNode, levels: usize, rng: &mut SimRng) -> Result<Vec<Bracket>> {
        let kids = self.params.sample_children(node, rng)?;
        self.charge(kids.len())?;
        kids.iter().map(|k| self.field_of(k, levels - 1, rng)).collect()
    }

    fn sum_messages(&self, fields: &[Bracket]) -> Bracket {
        let mut h = Bracket { free: self.field, plus: self.field };
        for c in fields {
            h.free += cavity_message(self.t, c.free);
            h.plus += cavity_message(self.t, c.plus);
        }
        h
    }
}

/// Sample a tree below a uniformly aged root and return its root field at
/// `cfg.depth` under both boundary conditions.
pub fn sample_h(params: &PptParams, cfg: &RdeConfig, rng: &mut SimRng) -> Result<RdeSample> {
    let root = params.sample_root(rng);
    sample_h_from(params, cfg, root, rng)
}

/// Like [`sample_h`] below a given node.
pub fn sample_h_from(params: &PptParams, cfg: &RdeConfig, node: TypedNode, rng: &mut SimRng) -> Result<RdeSample> {
    let mut w = Walker::new(params, cfg);
    let h = w.field_of(&node, cfg.depth, rng)?;
    Ok(RdeSample { age: node.age, label: node.label, h_free: h.free, h_plus: h.plus, depth: cfg.depth })
}

/// Root fields of an explicit tree at every depth `0..=tree.depth`.
pub fn depth_profile(tree: &PptTree, beta: f64, field: f64) -> Vec<Bracket> {
    let t = beta.tanh();
    let mut out = Vec::with_capacity(tree.depth + 1);
    let mut h = vec![Bracket::default(); tree.len()];
    for cut in 0..=tree.depth {
        for i in (0..tree.len()).rev() {
            let n = &tree.nodes[i];
            h[i] = if n.depth > cut {
                continue;
            } else if n.depth == cut {
                Bracket::leaf(field)
            } else {
                let mut s = Bracket { free: field, plus: field };
                for &c in &n.children {
                    s.free += cavity_message(t, h[c].free);
                    s.plus += cavity_message(t, h[c].plus);
                }
                s
            };
        }
        out.push(h[0]);
    }
    out
}

/// Everything one replicate contributes to the limit estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateValues {
    /// Number of children of the root.
    pub degree: usize,
    /// `tanh h(root)`.
    pub magnetisation: Bracket,
    /// Edge correlation across the pair (Young node, its first Old child).
    pub edge_corr: Bracket,
    /// `log(1 + tanh(beta) x y)` across the same pair.
    pub edge_log: Bracket,
    /// `log(e^B prod(1 + t x_i) + e^-B prod(1 - t x_i))` over root children.
    pub vertex_log: Bracket,
}

fn vertex_log(field: f64, t: f64, xs: impl Iterator<Item = f64>) -> f64 {
    let (mut plus, mut minus) = (field, -field);
    for x in xs {
        plus += (t * x).ln_1p();
        minus += (-t * x).ln_1p();
    }
    let hi = plus.max(minus);
    hi + ((plus - hi).exp() + (minus - hi).exp()).ln()
}

fn one_replicate(params: &PptParams, cfg: &RdeConfig, rng: &mut SimRng) -> Result<ReplicateValues> {
    let mut w = Walker::new(params, cfg);
    let t = w.t;
    let root = params.sample_root(rng);
    let kids = w.child_fields(&root, cfg.depth, rng)?;
    let h_root = w.sum_messages(&kids);

    let young = params.typed(NodeType { age: params.sample_uniform_age(rng), label: Label::Young }, rng);
    let old_age = params.sample_old_age(young.age, rng);
    let old = params.typed(NodeType { age: old_age, label: Label::Old }, rng);
    let hy = w.field_of(&young, cfg.depth, rng)?.map(f64::tanh);
    let ho = w.field_of(&old, cfg.depth - 1, rng)?.map(f64::tanh);
    let pair = |x: f64, y: f64| ((t + x * y) / (1.0 + t * x * y), (t * x * y).ln_1p());
    let (cf, lf) = pair(hy.free, ho.free);
    let (cp, lp) = pair(hy.plus, ho.plus);
    Ok(ReplicateValues {
        degree: kids.len(),
        magnetisation: h_root.map(f64::tanh),
        edge_corr: Bracket { free: cf, plus: cp },
        edge_log: Bracket { free: lf, plus: lp },
        vertex_log: Bracket {
            free: vertex_log(cfg.field, t, kids.iter().map(|k| k.free.tanh())),
            plus: vertex_log(cfg.field, t, kids.iter().map(|k| k.plus.tanh())),
        },
    })
}

/// Per-replicate values; replicate `k` draws from stream `k` of `cfg.seed`.
pub fn replicate_values(params: &PptParams, cfg: &RdeConfig) -> Result<Vec<ReplicateValues>> {
    cfg.validate()?;
    (0..cfg.replicates)
        .into_par_iter()
        .map(|k| one_replicate(params, cfg, &mut stream_rng(cfg.seed, k as u64)))
        .collect()
}

/// A limit estimate under both boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub free: Estimate,
    pub plus: Estimate,
    /// Average of the free and plus values, replicate by replicate.
    pub pooled: Estimate,
    pub bracket_bias: f64,
}

impl Quantity {
    fn from_samples(xs: &[Bracket]) -> Self {
        let free = mean_se(&xs.iter().map(|b| b.free).collect::<Vec<_>>());
        let plus = mean_se(&xs.iter().map(|b| b.plus).collect::<Vec<_>>());
        let pooled = mean_se(&xs.iter().map(Bracket::mid).collect::<Vec<_>>());
        Self { free, plus, pooled, bracket_bias: (plus.mean - free.mean).abs() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimates {
    pub phi: Quantity,
    pub magnetisation: Quantity,
    pub internal_energy: Quantity,
}

impl LimitEstimates {
    /// Largest bracket width over the three quantities.
    pub fn bracket_bias(&self) -> f64 {
        self.phi.bracket_bias.max(self.magnetisation.bracket_bias).max(self.internal_energy.bracket_bias)
    }
}

/// Per-replicate pressure values without variance reduction.
pub fn raw_phi(v: &ReplicateValues, m: usize, beta: f64) -> Bracket {
    let base = m as f64 * beta.cosh().ln();
    Bracket {
        free: base - m as f64 * v.edge_log.free + v.vertex_log.free,
        plus: base - m as f64 * v.edge_log.plus + v.vertex_log.plus,
    }
}

/// Subtract `c (D - 2m)` from each sample, with `c` the least-squares slope
/// of the samples on the root degree `D`, whose mean `2m` is known.
pub fn degree_control(ys: &[f64], values: &[ReplicateValues], m: usize) -> Vec<f64> {
    let d: Vec<f64> = values.iter().map(|v| v.degree as f64).collect();
    let n = d.len() as f64;
    let d_bar = d.iter().sum::<f64>() / n;
    let y_bar = ys.iter().sum::<f64>() / n;
    let var_d: f64 = d.iter().map(|x| (x - d_bar).powi(2)).sum();
    let c = if var_d > 0.0 { ys.iter().zip(&d).map(|(y, x)| (y - y_bar) * (x - d_bar)).sum::<f64>() / var_d } else { 0.0 };
    let mean_degree = 2.0 * m as f64;
    ys.iter().zip(&d).map(|(y, x)| y - c * (x - mean_degree)).collect()
}

/// Per-replicate pressure values with the root degree as control variate.
pub fn phi_samples(values: &[ReplicateValues], m: usize, beta: f64) -> Vec<Bracket> {
    let raw: Vec<Bracket> = values.iter().map(|v| raw_phi(v, m, beta)).collect();
    let free = degree_control(&raw.iter().map(|b| b.free).collect::<Vec<_>>(), values, m);
    let plus = degree_control(&raw.iter().map(|b| b.plus).collect::<Vec<_>>(), values, m);
    free.into_iter().zip(plus).map(|(free, plus)| Bracket { free, plus }).collect()
}

/// Central difference `(phi_hi - phi_lo) / width` of the pooled pressure from
/// two runs over the same trees, differenced replicate by replicate.
pub fn phi_difference(
    lo: &[ReplicateValues],
    hi: &[ReplicateValues],
    m: usize,
    beta_lo: f64,
    beta_hi: f64,
    width: f64,
) -> Result<Estimate> {
    if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| a.degree != b.degree) {
        return Err(invalid("finite differences need runs over the same trees"));
    }
    let diffs: Vec<f64> =
        lo.iter().zip(hi).map(|(a, b)| (raw_phi(b, m, beta_hi).mid() - raw_phi(a, m, beta_lo).mid()) / width).collect();
    Ok(mean_se(&degree_control(&diffs, lo, m)))
}

pub fn summarize(values: &[ReplicateValues], m: usize, beta: f64) -> LimitEstimates {
    let mag: Vec<Bracket> = values.iter().map(|v| v.magnetisation).collect();
    let energy: Vec<Bracket> = values.iter().map(|v| v.edge_corr.map(|c| -(m as f64) * c)).collect();
    LimitEstimates {
        phi: Quantity::from_samples(&phi_samples(values, m, beta)),
        magnetisation: Quantity::from_samples(&mag),
        internal_energy: Quantity::from_samples(&energy),
    }
}

/// Pressure, magnetisation and internal energy from one set of replicates.
pub fn estimate_limits(params: &PptParams, cfg: &RdeConfig) -> Result<LimitEstimates> {
    Ok(summarize(&replicate_values(params, cfg)?, params.m(), cfg.beta))
}

/// `E[tanh h(root)]`.
pub fn estimate_magnetisation(params: &PptParams, cfg: &RdeConfig) -> Result<Quantity> {
    cfg.validate()?;
    let mag: Vec<Bracket> = (0..cfg.replicates)
        .into_par_iter()
        .map(|k| sample_h(params, cfg, &mut stream_rng(cfg.seed, k as u64)).map(|s| Bracket { free: s.h_free, plus: s.h_plus }.map(f64::tanh)))
        .collect::<Result<_>>()?;
    Ok(Quantity::from_samples(&mag))
}

/// `-m E[(t + x y) / (1 + t x y)]` across a Young node and its first Old child.
pub fn estimate_internal_energy(params: &PptParams, cfg: &RdeConfig) -> Result<Quantity> {
    Ok(estimate_limits(params, cfg)?.internal_energy)
}

/// Limiting pressure per vertex.
pub fn estimate_phi(params: &PptParams, cfg: &RdeConfig) -> Result<Quantity> {
    Ok(estimate_limits(params, cfg)?.phi)
}

/// JSON record of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitRecord {
    pub beta: f64,
    #[serde(rename = "B")]
    pub field: f64,
    pub depth: usize,
    pub replicates: usize,
    pub phi: f64,
    pub phi_err: f64,
    #[serde(rename = "M")]
    pub magnetisation: f64,
    #[serde(rename = "M_err")]
    pub magnetisation_err: f64,
    #[serde(rename = "U")]
    pub internal_energy: f64,
    #[serde(rename = "U_err")]
    pub internal_energy_err: f64,
    pub bracket_bias: f64,
}

impl LimitRecord {
    pub fn new(cfg: &RdeConfig, est: &LimitEstimates) -> Self {
        Self {
            beta: cfg.beta,
            field: cfg.field,
            depth: cfg.depth,
            replicates: cfg.replicates,
            phi: est.phi.pooled.mean,
            phi_err: est.phi.pooled.err,
            magnetisation: est.magnetisation.pooled.mean,
            magnetisation_err: est.magnetisation.pooled.err,
            internal_energy: est.internal_energy.pooled.mean,
            internal_energy_err: est.internal_energy.pooled.err,
            bracket_bias: est.bracket_bias(),
        }
    }
}

/// Two coordinatewise KS tests between samples of field pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub first: TestOutcome,
    pub second: TestOutcome,
}

impl PairTest {
    fn new(a: &[(f64, f64)], b: &[(f64, f64)]) -> Self {
        let col = |s: &[(f64, f64)], i: usize| s.iter().map(|p| if i == 0 { p.0 } else { p.1 }).collect::<Vec<_>>();
        Self { first: ks_two_sample(&col(a, 0), &col(b, 0)), second: ks_two_sample(&col(a, 1), &col(b, 1)) }
    }

    pub fn min_p(&self) -> f64 {
        self.first.p_value.min(self.second.p_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// `(h without child 1 at the root, h of child 1)` against the reference pair.
    pub old_children: PairTest,
    /// `(h of a Young child of a size-biased Old node, h of that node)`
    /// against the reference pair.
    pub young_children: PairTest,
    /// `(h at the root including child 1, h of child 1)`: must be rejected.
    pub negative_control: PairTest,
}

impl EquivalenceReport {
    pub fn passes(&self, level: f64) -> bool {
        self.old_children.min_p() > level && self.young_children.min_p() > level && self.negative_control.min_p() < level
    }
}

/// Check the two distributional identities behind the pressure formula on
/// free-boundary fields.
///
/// The reference pair is `(h(Young, U), h(Old, U^(1/chi) U))` with independent
/// subtrees. Field depths match across each comparison: `cfg.depth` for the
/// first coordinate and `cfg.depth - 1` for the second.
pub fn equivalence_tests(params: &PptParams, cfg: &RdeConfig) -> Result<EquivalenceReport> {
    cfg.validate()?;
    let r = cfg.replicates;
    type Draw = ((f64, f64), (f64, f64), (f64, f64), (f64, f64));
    let draws: Vec<Draw> = (0..r)
        .into_par_iter()
        .map(|k| -> Result<Draw> {
            let rng = &mut stream_rng(cfg.seed, k as u64);
            let mut w = Walker::new(params, cfg);
            // reference pair
            let young = params.typed(NodeType { age: params.sample_uniform_age(rng), label: Label::Young }, rng);
            let old_age = params.sample_old_age(young.age, rng);
            let old = params.typed(NodeType { age: old_age, label: Label::Old }, rng);
            let reference = (w.field_of(&young, cfg.depth, rng)?.free, w.field_of(&old, cfg.depth - 1, rng)?.free);
            // root with its first (Old) child removed
            let root = params.sample_root(rng);
            let kids = w.child_fields(&root, cfg.depth, rng)?;
            let full = w.sum_messages(&kids).free;
            let rest = w.sum_messages(&kids[1..]).free;
            let first = kids[0].free;
            // size-biased Old node and one Young child of it
            let tilde = params.sample_size_biased_root(rng);
            let child_age = params.sample_young_age(tilde.age, rng);
            let child = params.typed(NodeType { age: child_age, label: Label::Young }, rng);
            let young_pair = (w.field_of(&child, cfg.depth, rng)?.free, w.field_of(&tilde, cfg.depth - 1, rng)?.free);
            Ok((reference, (rest, first), young_pair, (full, first)))
        })
        .collect::<Result<_>>()?;
    let pick = |f: fn(&Draw) -> (f64, f64)| draws.iter().map(f).collect::<Vec<_>>();
    let reference = pick(|d| d.0);
    // the reference is compared with samples from other trees, so use the
    // second half of one against the first half of the other
    let half = r / 2;
    Ok(EquivalenceReport {
        old_children: PairTest::new(&reference[..half], &pick(|d| d.1)[half..]),
        young_children: PairTest::new(&reference[half..], &pick(|d| d.2)[..half]),
        negative_control: PairTest::new(&reference[..half], &pick(|d| d.3)[half..]),
    })
}
