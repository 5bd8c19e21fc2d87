//! The Polya point tree: a multi-type branching process with ages, Old/Young
//! labels and Gamma strengths.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::fmt_f64;
use crate::graph::chi;

/// Default limit on the number of nodes in one sampled tree.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

/// Poisson means above this are treated as an overflow of the node cap.
const MAX_POISSON_MEAN: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Root,
    Old,
    Young,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Root => "Root",
            Label::Old => "Old",
            Label::Young => "Young",
        })
    }
}

/// Age and label of a node, which together determine the law of its subtree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeType {
    pub age: f64,
    pub label: Label,
}

/// A node type together with its sampled strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypedNode {
    pub age: f64,
    pub label: Label,
    pub strength: f64,
}

impl TypedNode {
    pub fn node_type(&self) -> NodeType {
        NodeType { age: self.age, label: self.label }
    }
}

/// Parameters `(m, delta)` of the tree, with the samplers they induce.
#[derive(Debug, Clone)]
pub struct PptParams {
    m: usize,
    delta: f64,
    chi: f64,
    young_strength: Gamma<f64>,
    old_strength: Gamma<f64>,
}

impl PptParams {
    pub fn new(m: usize, delta: f64) -> Result<Self> {
        if m < 1 {
            return Err(invalid("m must be at least 1"));
        }
        if !(delta > -(m as f64)) || !delta.is_finite() {
            return Err(invalid(format!("delta must exceed -m = {}, got {}", -(m as f64), delta)));
        }
        let shape = m as f64 + delta;
        let gamma = |s: f64| Gamma::new(s, 1.0).map_err(|e| invalid(e.to_string()));
        Ok(Self { m, delta, chi: chi(m, delta), young_strength: gamma(shape)?, old_strength: gamma(shape + 1.0)? })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `(m + delta) / (2m + delta)`.
    pub fn chi(&self) -> f64 {
        self.chi
    }

    /// Number of Old children: `m` for Root and Old nodes, `m - 1` for Young.
    pub fn old_children(&self, label: Label) -> usize {
        match label {
            Label::Root | Label::Old => self.m,
            Label::Young => self.m - 1,
        }
    }

    pub fn sample_strength<R: Rng + ?Sized>(&self, label: Label, rng: &mut R) -> f64 {
        match label {
            Label::Old => self.old_strength.sample(rng),
            Label::Root | Label::Young => self.young_strength.sample(rng),
        }
    }

    pub fn typed<R: Rng + ?Sized>(&self, t: NodeType, rng: &mut R) -> TypedNode {
        TypedNode { age: t.age, label: t.label, strength: self.sample_strength(t.label, rng) }
    }

    /// Mean number of Young children, `strength * (age^(chi-1) - 1)`.
    pub fn young_mean(&self, node: &TypedNode) -> f64 {
        node.strength * (node.age.powf(self.chi - 1.0) - 1.0)
    }

    /// Density of the size-biased root age, `((m+delta)/m)(a^(chi-1) - 1)`.
    pub fn density_gamma(&self, a: f64) -> Result<f64> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(invalid(format!("age must lie in (0, 1], got {a}")));
        }
        Ok((self.m as f64 + self.delta) / self.m as f64 * (a.powf(self.chi - 1.0) - 1.0))
    }

    /// Distribution function of [`density_gamma`](Self::density_gamma).
    pub fn cdf_gamma(&self, a: f64) -> f64 {
        let a = a.clamp(0.0, 1.0);
        (self.m as f64 + self.delta) / self.m as f64 * (a.powf(self.chi) / self.chi - a)
    }

    /// Density of a Young child's age given the parent's age `a`.
    pub fn density_f(&self, x: f64, a: f64) -> Result<f64> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(invalid(format!("parent age must lie in (0, 1], got {a}")));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(invalid(format!("age must lie in [0, 1], got {x}")));
        }
        if x < a || a == 1.0 {
            return Ok(0.0);
        }
        let c = 1.0 - self.chi;
        Ok(c * x.powf(-self.chi) / (1.0 - a.powf(c)))
    }

    /// Age of an Old child of a node aged `a`: `U^(1/chi) a`, resampled if it
    /// underflows to zero.
    pub fn sample_old_age<R: Rng + ?Sized>(&self, a: f64, rng: &mut R) -> f64 {
        loop {
            let x = rng.random::<f64>().powf(1.0 / self.chi) * a;
            if x > 0.0 {
                return x;
            }
        }
    }

    /// Age of a Young child of a node aged `a`, by inverting its distribution
    /// function.
    pub fn sample_young_age<R: Rng + ?Sized>(&self, a: f64, rng: &mut R) -> f64 {
        let c = 1.0 - self.chi;
        let lo = a.powf(c);
        let v: f64 = rng.random();
        (lo + v * (1.0 - lo)).powf(1.0 / c).min(1.0)
    }

    /// Uniform age on `(0, 1]`, never zero.
    pub fn sample_uniform_age<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        1.0 - rng.random::<f64>()
    }

    /// Age drawn from the size-biased density by bisection on its
    /// distribution function.
    pub fn sample_gamma_age<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_gamma(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Number of Young children of `node`.
    pub fn sample_young_count<R: Rng + ?Sized>(&self, node: &TypedNode, rng: &mut R) -> Result<usize> {
        let mean = self.young_mean(node);
        if !(mean > 0.0) {
            return Ok(0);
        }
        if mean > MAX_POISSON_MEAN {
            return Err(Error::NodeCapExceeded { cap: MAX_POISSON_MEAN as usize });
        }
        let dist = Poisson::new(mean).map_err(|e| invalid(e.to_string()))?;
        Ok(dist.sample(rng) as usize)
    }

    /// Probability of `count` Young children for a node of the given age and
    /// label, with the strength integrated out (negative binomial).
    pub fn young_count_pmf(&self, count: usize, age: f64, label: Label) -> Result<f64> {
        if !(age > 0.0 && age <= 1.0) {
            return Err(invalid(format!("age must lie in (0, 1], got {age}")));
        }
        let shape = match label {
            Label::Old => self.m as f64 + self.delta + 1.0,
            Label::Root | Label::Young => self.m as f64 + self.delta,
        };
        let lambda = age.powf(self.chi - 1.0) - 1.0;
        if lambda <= 0.0 {
            return Ok(if count == 0 { 1.0 } else { 0.0 });
        }
        let k = count as f64;
        let log_p = ln_gamma(shape + k) - ln_gamma(shape) - ln_gamma(k + 1.0) + k * (lambda / (1.0 + lambda)).ln()
            - shape * lambda.ln_1p();
        Ok(log_p.exp())
    }

    /// Total number of children without sampling their types.
    pub fn sample_child_count<R: Rng + ?Sized>(&self, node: &TypedNode, rng: &mut R) -> Result<usize> {
        Ok(self.old_children(node.label) + self.sample_young_count(node, rng)?)
    }

    /// Children of `node`: the Old ones first, then the Young ones.
    pub fn sample_children<R: Rng + ?Sized>(&self, node: &TypedNode, rng: &mut R) -> Result<Vec<TypedNode>> {
        let old = self.old_children(node.label);
        let young = self.sample_young_count(node, rng)?;
        let mut out = Vec::with_capacity(old + young);
        for _ in 0..old {
            let age = self.sample_old_age(node.age, rng);
            out.push(TypedNode { age, label: Label::Old, strength: self.sample_strength(Label::Old, rng) });
        }
        for _ in 0..young {
            let age = self.sample_young_age(node.age, rng);
            out.push(TypedNode { age, label: Label::Young, strength: self.sample_strength(Label::Young, rng) });
        }
        Ok(out)
    }

    pub fn sample_root<R: Rng + ?Sized>(&self, rng: &mut R) -> TypedNode {
        let age = self.sample_uniform_age(rng);
        TypedNode { age, label: Label::Root, strength: self.sample_strength(Label::Root, rng) }
    }

    /// An Old-labelled node with age density `density_gamma` and strength
    /// `Gamma(m + delta + 1, 1)`.
    pub fn sample_size_biased_root<R: Rng + ?Sized>(&self, rng: &mut R) -> TypedNode {
        let age = self.sample_gamma_age(rng);
        TypedNode { age, label: Label::Old, strength: self.sample_strength(Label::Old, rng) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PptNode {
    pub age: f64,
    pub label: Label,
    pub strength: f64,
    pub depth: usize,
    pub parent: Option<usize>,
    /// Position among the parent's children, starting at 1.
    pub rank: u32,
    pub children: Vec<usize>,
}

impl PptNode {
    pub fn typed(&self) -> TypedNode {
        TypedNode { age: self.age, label: self.label, strength: self.strength }
    }
}

/// A tree stored in breadth-first order, the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PptTree {
    pub nodes: Vec<PptNode>,
    pub depth: usize,
}

impl PptTree {
    pub fn root(&self) -> &PptNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of nodes at each level `0..=depth`.
    pub fn generation_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.depth + 1];
        for n in &self.nodes {
            sizes[n.depth] += 1;
        }
        sizes
    }

    /// Ulam-Harris address: `0` for the root, then child ranks joined by dots.
    pub fn address(&self, mut i: usize) -> String {
        let mut ranks = Vec::new();
        while let Some(p) = self.nodes[i].parent {
            ranks.push(self.nodes[i].rank);
            i = p;
        }
        let mut s = String::from("0");
        for r in ranks.iter().rev() {
            s.push('.');
            s.push_str(&r.to_string());
        }
        s
    }

    /// Lines `address age label strength`, breadth-first.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            writeln!(out, "{} {} {} {}", self.address(i), fmt_f64(n.age), n.label, fmt_f64(n.strength))?;
        }
        Ok(())
    }

    fn push(&mut self, node: TypedNode, depth: usize, parent: Option<usize>, rank: u32) -> usize {
        self.nodes.push(PptNode {
            age: node.age,
            label: node.label,
            strength: node.strength,
            depth,
            parent,
            rank,
            children: Vec::new(),
        });
        let i = self.nodes.len() - 1;
        if let Some(p) = parent {
            self.nodes[p].children.push(i);
        }
        i
    }
}

/// Breadth-first sample of the tree down to level `depth`.
pub fn sample_tree<R: Rng + ?Sized>(params: &PptParams, depth: usize, cap: usize, rng: &mut R) -> Result<PptTree> {
    let root = params.sample_root(rng);
    sample_tree_from(params, root, depth, cap, rng)
}

/// Like [`sample_tree`] with a given root node.
pub fn sample_tree_from<R: Rng + ?Sized>(
    params: &PptParams,
    root: TypedNode,
    depth: usize,
    cap: usize,
    rng: &mut R,
) -> Result<PptTree> {
    let mut tree = PptTree { nodes: Vec::new(), depth };
    tree.push(root, 0, None, 0);
    let mut next = 0;
    while next < tree.nodes.len() {
        let (node, d) = (tree.nodes[next].typed(), tree.nodes[next].depth);
        if d < depth {
            let kids = params.sample_children(&node, rng)?;
            if tree.nodes.len() + kids.len() > cap {
                return Err(Error::NodeCapExceeded { cap });
            }
            for (r, k) in kids.into_iter().enumerate() {
                tree.push(k, d + 1, Some(next), r as u32 + 1);
            }
        }
        next += 1;
    }
    Ok(tree)
}

/// Generation sizes `M_0..=M_depth` without storing the tree.
///
/// The last level is counted from offspring counts only, so its nodes are
/// never materialised.
pub fn generation_sizes<R: Rng + ?Sized>(params: &PptParams, depth: usize, cap: usize, rng: &mut R) -> Result<Vec<u64>> {
    let mut sizes = vec![0u64; depth + 1];
    sizes[0] = 1;
    if depth == 0 {
        return Ok(sizes);
    }
    let mut stack = vec![(params.sample_root(rng), 0usize)];
    let mut total = 1u64;
    while let Some((node, d)) = stack.pop() {
        if d + 1 == depth {
            let c = params.sample_child_count(&node, rng)? as u64;
            sizes[depth] += c;
            total += c;
        } else {
            let kids = params.sample_children(&node, rng)?;
            sizes[d + 1] += kids.len() as u64;
            total += kids.len() as u64;
            stack.extend(kids.into_iter().map(|k| (k, d + 1)));
        }
        if total > cap as u64 {
            return Err(Error::NodeCapExceeded { cap });
        }
    }
    Ok(sizes)
}

/// Keep each edge independently with probability `pi` and return the
/// component of the root. Addresses of retained nodes are preserved.
pub fn percolate<R: Rng + ?Sized>(tree: &PptTree, pi: f64, rng: &mut R) -> Result<PptTree> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(invalid(format!("retention probability must lie in [0, 1], got {pi}")));
    }
    let mut out = PptTree { nodes: Vec::new(), depth: tree.depth };
    out.push(tree.nodes[0].typed(), 0, None, 0);
    let mut map = vec![(0usize, 0usize)];
    let mut next = 0;
    while next < map.len() {
        let (src, dst) = map[next];
        for &c in &tree.nodes[src].children {
            if rng.random::<f64>() < pi {
                let n = &tree.nodes[c];
                let i = out.push(n.typed(), n.depth, Some(dst), n.rank);
                map.push((c, i));
            }
        }
        next += 1;
    }
    Ok(out)
}

/// Whether the root component of a `pi`-percolated tree reaches level
/// `depth`.
///
/// Only retained edges are explored, which has the same law as percolating a
/// fully sampled tree; exploration stops at the first node found at `depth`.
pub fn percolation_reaches<R: Rng + ?Sized>(
    params: &PptParams,
    pi: f64,
    depth: usize,
    cap: usize,
    rng: &mut R,
) -> Result<bool> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(invalid(format!("retention probability must lie in [0, 1], got {pi}")));
    }
    let mut stack = vec![(params.sample_root(rng), 0usize)];
    let mut seen = 1usize;
    while let Some((node, d)) = stack.pop() {
        if d == depth {
            return Ok(true);
        }
        for k in params.sample_children(&node, rng)? {
            if rng.random::<f64>() < pi {
                stack.push((k, d + 1));
                seen += 1;
            }
        }
        if seen > cap {
            return Err(Error::NodeCapExceeded { cap });
        }
    }
    Ok(false)
}
