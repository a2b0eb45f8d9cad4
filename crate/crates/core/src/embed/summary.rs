use alloc::vec;
use alloc::vec::Vec;

use super::diffusion::diffusion_node_features;
use crate::graph::Graph;
use crate::math::ExactSum;

/// Fixed-length graph-level feature vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct GraphEmbedding(Vec<f64>);

impl GraphEmbedding {
    pub fn new(vector: Vec<f64>) -> Self {
        Self(vector)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for GraphEmbedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Anything that maps graphs to fixed-dimension vectors. The summary
/// embedding below is the built-in implementation; a learned embedder
/// (e.g. a contrastive GNN with 32-dimensional output) can be plugged in here.
pub trait GraphEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, graph: &Graph) -> GraphEmbedding;

    fn embed_all(&self, graphs: &[Graph]) -> Vec<GraphEmbedding> {
        graphs.iter().map(|g| self.embed(g)).collect()
    }
}

/// Settings for [`graph_summary_embedding`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EmbeddingConfig {
    /// Random-walk steps `d_s` for the diffusion block.
    pub diffusion_steps: usize,
    pub wl_iterations: usize,
    /// Number of hash buckets for the WL histogram (at least 8).
    pub wl_dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { diffusion_steps: 16, wl_iterations: 3, wl_dim: 64 }
    }
}

impl EmbeddingConfig {
    /// `wl_dim + 2·diffusion_steps + 3`.
    pub fn dim(&self) -> usize {
        self.wl_dim + 2 * self.diffusion_steps + 3
    }
}

impl GraphEmbedder for EmbeddingConfig {
    fn dim(&self) -> usize {
        EmbeddingConfig::dim(self)
    }

    fn embed(&self, graph: &Graph) -> GraphEmbedding {
        graph_summary_embedding(graph, self)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Clone, Copy)]
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Self(FNV_OFFSET)
    }

    fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    fn finish(self) -> u64 {
        self.0
    }
}

fn initial_label(row: &[f64]) -> u64 {
    let mut h = Fnv::new();
    for &x in row {
        // +0.0 and -0.0 describe the same attribute
        let x = if x == 0.0 { 0.0 } else { x };
        h.write_u64(x.to_bits());
    }
    h.finish()
}

/// Weisfeiler-Lehman subtree labels of every node for rounds `0..=iterations`.
/// Round 0 labels hash the node feature row.
fn wl_labels(graph: &Graph, iterations: usize) -> Vec<Vec<u64>> {
    let topo = graph.topology();
    let n = graph.node_count();
    let mut rounds = Vec::with_capacity(iterations + 1);
    rounds.push((0..n).map(|i| initial_label(graph.feature_row(i))).collect::<Vec<u64>>());
    let mut multiset = Vec::new();
    for _ in 0..iterations {
        let prev = rounds.last().expect("round 0 exists");
        let next = (0..n)
            .map(|i| {
                multiset.clear();
                multiset.extend(topo.neighbors(i).iter().map(|&j| prev[j as usize]));
                multiset.sort_unstable();
                let mut h = Fnv::new();
                h.write_u64(prev[i]);
                h.write_u64(multiset.len() as u64);
                multiset.iter().for_each(|&l| h.write_u64(l));
                h.finish()
            })
            .collect();
        rounds.push(next);
    }
    rounds
}

/// Deterministic structural embedding of a graph.
///
/// Layout: `[WL histogram (wl_dim) | mean diffusion (d_s) | max diffusion (d_s)
/// | ln(1+n), ln(1+m), mean degree]`. The WL histogram counts subtree labels of
/// all refinement rounds, bucketed by hash modulo `wl_dim` and L1-normalized.
/// The result is exactly invariant under node relabeling.
pub fn graph_summary_embedding(graph: &Graph, config: &EmbeddingConfig) -> GraphEmbedding {
    assert!(config.wl_dim >= 8, "wl_dim must be at least 8");
    let n = graph.node_count();
    let m = graph.edge_count();
    let steps = config.diffusion_steps;
    let mut out = vec![0.0; config.dim()];

    let rounds = wl_labels(graph, config.wl_iterations);
    let total = (rounds.len() * n) as f64;
    for label in rounds.iter().flatten() {
        out[(label % config.wl_dim as u64) as usize] += 1.0;
    }
    out[..config.wl_dim].iter_mut().for_each(|x| *x /= total);

    let diffusion = diffusion_node_features(graph.topology(), steps);
    let (mean_block, rest) = out[config.wl_dim..].split_at_mut(steps);
    let (max_block, size_block) = rest.split_at_mut(steps);
    for k in 0..steps {
        let mut sum = ExactSum::new();
        let mut max = 0.0f64;
        for row in diffusion.rows() {
            sum.add(row[k]);
            max = max.max(row[k]);
        }
        mean_block[k] = sum.value() / n as f64;
        max_block[k] = max;
    }
    size_block[0] = libm::log1p(n as f64);
    size_block[1] = libm::log1p(m as f64);
    size_block[2] = 2.0 * m as f64 / n as f64;
    GraphEmbedding(out)
}
