use alloc::vec;
use alloc::vec::Vec;

use crate::graph::Topology;

/// Diagonals of successive random-walk transition powers, one row per node:
/// row `i` is `[T_ii, (T^2)_ii, ..., (T^steps)_ii]` with `T = A D^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralFeatures {
    steps: usize,
    rows: Vec<f64>,
}

impl StructuralFeatures {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn node_count(&self) -> usize {
        if self.steps == 0 {
            0
        } else {
            self.rows.len() / self.steps
        }
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.rows[node * self.steps..(node + 1) * self.steps]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.steps.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

const FIXED: f64 = 79_228_162_514_264_337_593_543_950_336.0; // 2^96

/// Return probabilities of a `steps`-step random walk for every node.
///
/// Isolated nodes have an all-zero row. Each step is computed as
/// `v' = A (D^-1 v)` starting from the indicator of the node; neighbor sums are
/// accumulated in fixed point so the result is exactly invariant under node
/// relabeling.
pub fn diffusion_node_features(topology: &Topology, steps: usize) -> StructuralFeatures {
    assert!(steps >= 1, "diffusion needs at least one step");
    let n = topology.node_count();
    let inv_degree: Vec<f64> = (0..n)
        .map(|i| match topology.degree(i) {
            0 => 0.0,
            d => 1.0 / d as f64,
        })
        .collect();

    let mut rows = vec![0.0; n * steps];
    let mut walk = vec![0.0f64; n];
    let mut scaled = vec![0i128; n];
    for start in 0..n {
        if topology.degree(start) == 0 {
            continue;
        }
        walk.iter_mut().for_each(|x| *x = 0.0);
        walk[start] = 1.0;
        for step in 0..steps {
            for (s, (&w, &inv)) in scaled.iter_mut().zip(walk.iter().zip(&inv_degree)) {
                *s = (w * inv * FIXED) as i128;
            }
            for (node, slot) in walk.iter_mut().enumerate() {
                let acc: i128 = topology.neighbors(node).iter().map(|&l| scaled[l as usize]).sum();
                *slot = acc as f64 / FIXED;
            }
            rows[start * steps + step] = walk[start];
        }
    }
    StructuralFeatures { steps, rows }
}
