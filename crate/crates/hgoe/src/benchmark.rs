//! Synthetic stochastic-block-model benchmark.

use hgoe_core::graph::{Graph, GraphDataset, Topology};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const ID_NAME: &str = "sbm-id";
pub const OOD_NAME: &str = "sbm-ood";
pub const POOL_NAME: &str = "sbm-er";

/// Two-block SBM with equal halves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blocks {
    pub p_in: f64,
    pub p_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmBenchmark {
    /// Block probabilities of each ID subgroup.
    pub id_subgroups: Vec<Blocks>,
    pub graphs_per_subgroup: usize,
    pub ood: Blocks,
    pub ood_count: usize,
    pub pool_count: usize,
    /// Edge probability range of the Erdős–Rényi pool graphs.
    pub pool_density: [f64; 2],
    /// Inclusive node-count range shared by every graph.
    pub nodes: [usize; 2],
    /// Features of ID and OOD graphs.
    pub features: NodeFeatures,
    pub pool_features: NodeFeatures,
    pub seed: u64,
}

impl Default for SbmBenchmark {
    fn default() -> Self {
        Self {
            id_subgroups: vec![Blocks { p_in: 0.6, p_out: 0.1 }, Blocks { p_in: 0.5, p_out: 0.05 }],
            graphs_per_subgroup: 250,
            ood: Blocks { p_in: 0.3, p_out: 0.3 },
            ood_count: 250,
            pool_count: 500,
            pool_density: [0.05, 0.6],
            nodes: [20, 40],
            features: NodeFeatures::Binary,
            pool_features: NodeFeatures::Binary,
            seed: 0,
        }
    }
}

/// Per-node feature distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFeatures {
    /// Always `1.0`.
    Constant,
    /// `0.0` or `1.0` with equal probability.
    Binary,
    /// Uniform on `[0, 1)`.
    Uniform,
}

impl NodeFeatures {
    fn sample(self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            NodeFeatures::Constant => vec![1.0; n],
            NodeFeatures::Binary => (0..n).map(|_| f64::from(rng.random::<bool>() as u8)).collect(),
            NodeFeatures::Uniform => (0..n).map(|_| rng.random::<f64>()).collect(),
        }
    }
}

pub struct BenchmarkData {
    pub id: GraphDataset,
    pub ood: GraphDataset,
    pub pool: GraphDataset,
}

fn sbm(n: usize, blocks: Blocks, rng: &mut ChaCha8Rng) -> Topology {
    let half = n / 2;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if (i < half) == (j < half) { blocks.p_in } else { blocks.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Topology::from_edges(n, edges).expect("indices are in range")
}

impl SbmBenchmark {
    fn size(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(self.nodes[0]..=self.nodes[1])
    }

    pub fn generate(&self) -> Result<BenchmarkData> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut id = Vec::new();
        for blocks in &self.id_subgroups {
            for _ in 0..self.graphs_per_subgroup {
                let n = self.size(&mut rng);
                let topology = sbm(n, *blocks, &mut rng);
                let x = self.features.sample(n, &mut rng);
                id.push(Graph::new(topology, x, 1, ID_NAME, id.len())?);
            }
        }
        let ood = (0..self.ood_count)
            .map(|i| {
                let n = self.size(&mut rng);
                let topology = sbm(n, self.ood, &mut rng);
                let x = self.features.sample(n, &mut rng);
                Ok(Graph::new(topology, x, 1, OOD_NAME, i)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let pool = (0..self.pool_count)
            .map(|i| {
                let n = self.size(&mut rng);
                let p = rng.random_range(self.pool_density[0]..=self.pool_density[1]);
                let topology = sbm(n, Blocks { p_in: p, p_out: p }, &mut rng);
                let features = self.pool_features.sample(n, &mut rng);
                Ok(Graph::new(topology, features, 1, POOL_NAME, i)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BenchmarkData {
            id: GraphDataset::new(ID_NAME, 1, id)?,
            ood: GraphDataset::new(OOD_NAME, 1, ood)?,
            pool: GraphDataset::new(POOL_NAME, 1, pool)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let cfg = SbmBenchmark { graphs_per_subgroup: 5, ood_count: 4, pool_count: 3, ..Default::default() };
        let a = cfg.generate().unwrap();
        assert_eq!((a.id.len(), a.ood.len(), a.pool.len()), (10, 4, 3));
        assert!(a.id.graphs().iter().all(|g| (20..=40).contains(&g.node_count())));
        let b = cfg.generate().unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(a.pool, b.pool);
    }

    #[test]
    fn block_densities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut inside, mut inside_pairs, mut across, mut across_pairs) = (0, 0, 0, 0);
        for _ in 0..50 {
            let t = sbm(40, Blocks { p_in: 0.6, p_out: 0.1 }, &mut rng);
            for i in 0..40 {
                for j in i + 1..40 {
                    let e = t.has_edge(i, j) as usize;
                    if (i < 20) == (j < 20) {
                        inside += e;
                        inside_pairs += 1;
                    } else {
                        across += e;
                        across_pairs += 1;
                    }
                }
            }
        }
        assert!((inside as f64 / inside_pairs as f64 - 0.6).abs() < 0.02);
        assert!((across as f64 / across_pairs as f64 - 0.1).abs() < 0.02);
    }
}
