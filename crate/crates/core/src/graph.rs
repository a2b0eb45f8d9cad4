//! Graph and dataset data model, ID train/test splits and labeled test sets.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::rng;

/// Undirected simple graph structure stored as sorted neighbor lists.
///
/// Construction symmetrizes the edge set, drops self loops and collapses
/// duplicates, so the adjacency is always symmetric 0/1 with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<u32>>,
    edge_count: usize,
}

impl Topology {
    /// Graph on `n` nodes without edges.
    pub fn empty(n: usize) -> Self {
        Self { neighbors: alloc::vec![Vec::new(); n], edge_count: 0 }
    }

    /// Builds from 0-based node pairs. Pairs may appear in either or both
    /// directions.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut neighbors = alloc::vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Format(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                continue;
            }
            neighbors[u].push(v as u32);
            neighbors[v].push(u as u32);
        }
        let mut twice = 0;
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
            twice += list.len();
        }
        Ok(Self { neighbors, edge_count: twice / 2 })
    }

    /// Builds from a dense row-major matrix; any nonzero off-diagonal entry
    /// in either triangle is an edge.
    pub fn from_dense(n: usize, matrix: &[u8]) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::Dimension { expected: n * n, found: matrix.len() });
        }
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| matrix[i * n + j] != 0 || matrix[j * n + i] != 0);
        Self::from_edges(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[node]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&(v as u32)).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, list)| {
            list.iter().map(|&j| j as usize).filter(move |&j| j > i).map(move |j| (i, j))
        })
    }

    /// Dense row-major 0/1 adjacency.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.node_count();
        let mut out = alloc::vec![0.0; n * n];
        for (i, j) in self.edges() {
            out[i * n + j] = 1.0;
            out[j * n + i] = 1.0;
        }
        out
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let edges = self.edges().map(|(i, j)| (perm[i], perm[j]));
        Self::from_edges(self.node_count(), edges).expect("permutation preserves node range")
    }

    /// Subgraph induced by `nodes`; node `nodes[k]` becomes `k`.
    pub fn induced(&self, nodes: &[usize]) -> Self {
        let mut position = alloc::vec![usize::MAX; self.node_count()];
        for (k, &v) in nodes.iter().enumerate() {
            position[v] = k;
        }
        let edges = self
            .edges()
            .filter(|&(i, j)| position[i] != usize::MAX && position[j] != usize::MAX)
            .map(|(i, j)| (position[i], position[j]));
        Self::from_edges(nodes.len(), edges).expect("induced nodes are in range")
    }
}

/// A graph `G = (V, E, X)` with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    topology: Topology,
    /// Row-major `node_count × feature_dim`.
    features: Vec<f64>,
    feature_dim: usize,
    source_dataset: String,
    graph_id: usize,
}

impl Graph {
    pub fn new(
        topology: Topology,
        features: Vec<f64>,
        feature_dim: usize,
        source_dataset: impl Into<String>,
        graph_id: usize,
    ) -> Result<Self> {
        let n = topology.node_count();
        if n == 0 {
            return Err(Error::Format(format!("graph {graph_id} has no nodes")));
        }
        if feature_dim == 0 {
            return Err(Error::Format(format!("graph {graph_id} has feature_dim 0")));
        }
        if features.len() != n * feature_dim {
            return Err(Error::Dimension { expected: n * feature_dim, found: features.len() });
        }
        Ok(Self { topology, features, feature_dim, source_dataset: source_dataset.into(), graph_id })
    }

    /// Graph whose every node carries the feature `[1.0]`.
    pub fn with_constant_features(
        topology: Topology,
        source_dataset: impl Into<String>,
        graph_id: usize,
    ) -> Result<Self> {
        let n = topology.node_count();
        Self::new(topology, alloc::vec![1.0; n], 1, source_dataset, graph_id)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.topology.edge_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        &self.features[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    pub fn source_dataset(&self) -> &str {
        &self.source_dataset
    }

    pub fn graph_id(&self) -> usize {
        self.graph_id
    }

    pub fn set_provenance(&mut self, source_dataset: impl Into<String>, graph_id: usize) {
        self.source_dataset = source_dataset.into();
        self.graph_id = graph_id;
    }

    /// Relabels nodes (`i` becomes `perm[i]`), carrying feature rows along.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.feature_dim;
        let mut features = alloc::vec![0.0; self.features.len()];
        for (i, &p) in perm.iter().enumerate() {
            features[p * d..(p + 1) * d].copy_from_slice(self.feature_row(i));
        }
        Self { topology: self.topology.permuted(perm), features, ..self.clone() }
    }
}

/// Named, ordered collection of graphs sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    name: String,
    graphs: Vec<Graph>,
    feature_dim: usize,
}

impl GraphDataset {
    pub fn new(name: impl Into<String>, feature_dim: usize, graphs: Vec<Graph>) -> Result<Self> {
        if let Some(g) = graphs.iter().find(|g| g.feature_dim() != feature_dim) {
            return Err(Error::Dimension { expected: feature_dim, found: g.feature_dim() });
        }
        Ok(Self { name: name.into(), graphs, feature_dim })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn mean_node_count(&self) -> f64 {
        if self.graphs.is_empty() {
            return 0.0;
        }
        let total: usize = self.graphs.iter().map(Graph::node_count).sum();
        total as f64 / self.graphs.len() as f64
    }

    pub fn select(&self, indices: &[usize]) -> Vec<Graph> {
        indices.iter().map(|&i| self.graphs[i].clone()).collect()
    }
}

/// Partition of an ID dataset into training and held-out test indices.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub test_id: Vec<usize>,
    pub seed: u64,
}

/// Number of training graphs for `n` graphs at `train_fraction`:
/// `round(train_fraction · n)` clamped to `[1, n - 1]`.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    let raw = libm::round(train_fraction * n as f64) as usize;
    raw.clamp(1, n - 1)
}

/// Random train/test split of `n` ID graphs. Both index lists are sorted.
pub fn split_in_distribution(n: usize, train_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!("train_fraction {train_fraction} is outside (0, 1)")));
    }
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 graphs to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::task::SPLIT));
    let n_train = train_count(n, train_fraction);
    let mut train = order[..n_train].to_vec();
    let mut test_id = order[n_train..].to_vec();
    train.sort_unstable();
    test_id.sort_unstable();
    Ok(SplitSpec { train, test_id, seed })
}

/// Ground-truth label of a test graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Label {
    Id = 0,
    Ood = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// `D_test = D_test^in ∪ D_test^ood`: ID graphs first, then OOD graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTestSet {
    pub graphs: Vec<Graph>,
    pub labels: Vec<Label>,
}

impl LabeledTestSet {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Pairs the held-out ID graphs with an equal number of OOD graphs sampled
/// without replacement from `ood`.
pub fn assemble_test_set(id_test: &[Graph], ood: &GraphDataset, seed: u64) -> Result<LabeledTestSet> {
    if let Some(g) = id_test.first() {
        if g.feature_dim() != ood.feature_dim() {
            return Err(Error::Dimension { expected: g.feature_dim(), found: ood.feature_dim() });
        }
    }
    if ood.len() < id_test.len() {
        return Err(Error::Assembly(format!(
            "OOD dataset '{}' has {} graphs but {} are needed",
            ood.name(),
            ood.len(),
            id_test.len()
        )));
    }
    let mut rng = rng::stream(seed, rng::task::TEST_SET);
    let picked = index::sample(&mut rng, ood.len(), id_test.len()).into_vec();
    let mut graphs = id_test.to_vec();
    graphs.extend(picked.iter().map(|&i| ood.graphs()[i].clone()));
    let mut labels = alloc::vec![Label::Id; id_test.len()];
    labels.extend(core::iter::repeat_n(Label::Ood, id_test.len()));
    Ok(LabeledTestSet { graphs, labels })
}

/// Convenience for fixtures: graph with constant features from an edge list.
pub fn simple_graph(n: usize, edges: &[(usize, usize)]) -> Graph {
    let topology = Topology::from_edges(n, edges.iter().copied()).expect("valid fixture edges");
    Graph::with_constant_features(topology, "fixture".to_string(), 0).expect("valid fixture")
}
