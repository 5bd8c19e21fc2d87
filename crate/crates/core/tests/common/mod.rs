#![allow(dead_code)]

use ppt_ising::graph::MultiGraph;
use rand::seq::SliceRandom;
use rand::Rng;

/// Uniform random recursive tree on `n` vertices with shuffled labels.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> MultiGraph {
    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(rng);
    let mut g = MultiGraph::new(n);
    for v in 1..n {
        let parent = rng.random_range(0..v);
        g.add_edge(label[v], label[parent]).unwrap();
    }
    g
}

/// Erdos-Renyi style multigraph: each unordered pair gets an edge with
/// probability `p`, plus an occasional parallel edge or self-loop.
pub fn random_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> MultiGraph {
    let mut g = MultiGraph::new(n);
    for u in 0..n {
        for v in 0..u {
            if rng.random::<f64>() < p {
                g.add_edge(u, v).unwrap();
                if rng.random::<f64>() < 0.1 {
                    g.add_edge(u, v).unwrap();
                }
            }
        }
        if rng.random::<f64>() < 0.05 {
            g.add_edge(u, u).unwrap();
        }
    }
    g
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
