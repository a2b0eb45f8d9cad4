//! Outlier exposure sets: external pools from auxiliary datasets, internal
//! outliers synthesized between ID subgroups, and their hybrid mix.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::embed::diffusion_node_features;
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset, Topology};
use crate::graphon::{bernoulli_sample, downsample_graphon, mixup_graphons, random_size, Graphon};
use crate::math::squared_distance;
use crate::rng;

/// Source tag carried by synthesized graphs.
pub const INTERNAL_SOURCE: &str = "hgoe-internal";

/// Distinct diffusion rows of every pool node, each mapped to the first
/// `(pool graph, node)` that produced it.
#[derive(Debug, Clone)]
struct DiffusionIndex {
    steps: usize,
    rows: Vec<f64>,
    owners: Vec<(usize, usize)>,
}

impl DiffusionIndex {
    fn build(graphs: &[Graph], steps: usize) -> Self {
        let mut seen: BTreeMap<Vec<u64>, ()> = BTreeMap::new();
        let mut rows = Vec::new();
        let mut owners = Vec::new();
        for (g, graph) in graphs.iter().enumerate() {
            let features = diffusion_node_features(graph.topology(), steps);
            for node in 0..graph.node_count() {
                let row = features.row(node);
                let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
                if seen.insert(key, ()).is_none() {
                    rows.extend_from_slice(row);
                    owners.push((g, node));
                }
            }
        }
        Self { steps, rows, owners }
    }

    /// First owner at minimum Euclidean distance; owners are stored in
    /// ascending `(graph, node)` order so strict `<` keeps the tie-break.
    fn nearest(&self, query: &[f64]) -> (usize, usize) {
        let mut best = (0, f64::INFINITY);
        for (k, row) in self.rows.chunks_exact(self.steps).enumerate() {
            let d = squared_distance(query, row);
            if d < best.1 {
                best = (k, d);
            }
        }
        self.owners[best.0]
    }
}

/// External outlier graphs `D_oe^ext` with cached structural features.
#[derive(Debug, Clone)]
pub struct OutlierPool {
    graphs: Vec<Graph>,
    feature_dim: usize,
    excluded: BTreeSet<String>,
    index: DiffusionIndex,
}

impl OutlierPool {
    /// Pool from explicit graphs. Graphs are addressed by their position in
    /// `graphs` for tie-breaking.
    pub fn from_graphs(
        graphs: Vec<Graph>,
        feature_dim: usize,
        excluded: BTreeSet<String>,
        diffusion_steps: usize,
    ) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Pool("the external outlier pool is empty".into()));
        }
        if let Some(g) = graphs.iter().find(|g| g.feature_dim() != feature_dim) {
            return Err(Error::Dimension { expected: feature_dim, found: g.feature_dim() });
        }
        if let Some(g) = graphs.iter().find(|g| excluded.contains(g.source_dataset())) {
            return Err(Error::Pool(format!(
                "graph {} comes from excluded dataset '{}'",
                g.graph_id(),
                g.source_dataset()
            )));
        }
        let index = DiffusionIndex::build(&graphs, diffusion_steps);
        Ok(Self { graphs, feature_dim, excluded, index })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn diffusion_steps(&self) -> usize {
        self.index.steps
    }

    pub fn excluded(&self) -> &BTreeSet<String> {
        &self.excluded
    }

    /// `(pool graph, node)` whose diffusion row is closest to `query`.
    pub fn nearest_node(&self, query: &[f64]) -> (usize, usize) {
        self.index.nearest(query)
    }
}

/// Union of every dataset with `feature_dim` features, other than the ID and
/// test-OOD datasets.
pub fn build_external_pool(
    datasets: &[&GraphDataset],
    id_name: &str,
    ood_name: &str,
    feature_dim: usize,
    diffusion_steps: usize,
) -> Result<OutlierPool> {
    let excluded: BTreeSet<String> = [id_name.to_string(), ood_name.to_string()].into();
    let graphs: Vec<Graph> = datasets
        .iter()
        .filter(|d| d.feature_dim() == feature_dim && !excluded.contains(d.name()))
        .flat_map(|d| d.graphs().iter().filter(|g| !excluded.contains(g.source_dataset())).cloned())
        .collect();
    if graphs.is_empty() {
        return Err(Error::Pool(format!(
            "no auxiliary graphs with feature dimension {feature_dim} remain after excluding \
             '{id_name}' and '{ood_name}'; supply auxiliary datasets with matching features"
        )));
    }
    OutlierPool::from_graphs(graphs, feature_dim, excluded, diffusion_steps)
}

/// Node features for a feature-less structure: each node copies the feature
/// row of the pool node with the nearest diffusion vector (Euclidean; ties
/// by pool graph position, then node index).
pub fn align_features(structure: &Topology, pool: &OutlierPool) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Err(Error::Alignment("cannot align against an empty pool".into()));
    }
    let diffusion = diffusion_node_features(structure, pool.diffusion_steps());
    let mut memo: BTreeMap<Vec<u64>, (usize, usize)> = BTreeMap::new();
    let mut features = Vec::with_capacity(structure.node_count() * pool.feature_dim());
    for row in diffusion.rows() {
        let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
        let (g, node) = *memo.entry(key).or_insert_with(|| pool.nearest_node(row));
        features.extend_from_slice(pool.graphs[g].feature_row(node));
    }
    Ok(features)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthesisConfig {
    /// `λ` is drawn uniformly from `[lo, hi]`.
    pub lambda_range: [f64; 2],
    /// Total OE graphs; defaults to the number of ID training graphs.
    pub total_count: usize,
    /// External : internal.
    pub ext_int_ratio: [u32; 2],
    pub seed: u64,
}

impl SynthesisConfig {
    pub fn new(total_count: usize, seed: u64) -> Self {
        Self { lambda_range: [0.01, 1.0], total_count, ext_int_ratio: [1, 1], seed }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.lambda_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Synthesis(format!("invalid lambda range [{lo}, {hi}]")));
        }
        if self.ext_int_ratio == [0, 0] {
            return Err(Error::Synthesis("external:internal ratio 0:0".into()));
        }
        Ok(())
    }

    /// `(n_ext, n_int)` with `n_ext = round(total · ext / (ext + int))`.
    pub fn split_counts(&self) -> (usize, usize) {
        let [e, i] = self.ext_int_ratio;
        let n_ext = libm::round(self.total_count as f64 * e as f64 / (e + i) as f64) as usize;
        (n_ext, self.total_count - n_ext)
    }
}

/// One ID-mixup draw: graphons of subgroups `pair.0 < pair.1`, weight
/// `lambda` on the first.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixupSpec {
    pub task: usize,
    pub pair: (usize, usize),
    pub lambda: f64,
}

fn draw_lambda(range: [f64; 2], rng: &mut rng::Rng) -> f64 {
    let [lo, hi] = range;
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Subgroup pairs `(i, j)`, `i < j`, visited round-robin, with each task's
/// `λ` drawn from its own stream.
pub fn plan_mixups(subgroups: usize, count: usize, config: &SynthesisConfig) -> Result<Vec<MixupSpec>> {
    config.validate()?;
    if subgroups < 2 {
        return Err(Error::Synthesis(format!(
            "{subgroups} subgroup(s): mixup needs at least two graphons"
        )));
    }
    let pairs: Vec<(usize, usize)> =
        (0..subgroups).flat_map(|i| (i + 1..subgroups).map(move |j| (i, j))).collect();
    Ok((0..count)
        .map(|task| {
            let mut rng = rng::stream(config.seed, rng::task::INTERNAL_BASE + task as u64);
            MixupSpec { task, pair: pairs[task % pairs.len()], lambda: draw_lambda(config.lambda_range, &mut rng) }
        })
        .collect())
}

/// Mixes, sizes, samples and feature-aligns one internal outlier. Depends only
/// on `(config.seed, spec.task)`, so tasks may run in any order.
pub fn synthesize_outlier(
    graphons: &[Graphon],
    spec: &MixupSpec,
    config: &SynthesisConfig,
    pool: &OutlierPool,
) -> Result<Graph> {
    let mut rng = rng::stream(config.seed, rng::task::INTERNAL_BASE + spec.task as u64);
    let lambda = draw_lambda(config.lambda_range, &mut rng);
    debug_assert_eq!(lambda.to_bits(), spec.lambda.to_bits());
    let (i, j) = spec.pair;
    let mixed = mixup_graphons(&graphons[i], &graphons[j], lambda)?;
    let r = random_size(mixed.resolution(), &mut rng)?;
    let sampled = downsample_graphon(&mixed, r, &mut rng)?;
    let structure = bernoulli_sample(&sampled, &mut rng);
    let features = align_features(&structure, pool)?;
    Graph::new(structure, features, pool.feature_dim(), INTERNAL_SOURCE, spec.task)
}

/// `count` internal outliers `D_oe^int` from pairwise subgroup mixups.
pub fn generate_internal_outliers(
    graphons: &[Graphon],
    count: usize,
    config: &SynthesisConfig,
    pool: &OutlierPool,
) -> Result<Vec<Graph>> {
    plan_mixups(graphons.len(), count, config)?
        .iter()
        .map(|spec| synthesize_outlier(graphons, spec, config, pool))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Origin {
    External,
    Internal,
}

/// Hybrid outlier exposure set `D_oe = D_oe^ext ∪ D_oe^int`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierSet {
    pub graphs: Vec<Graph>,
    pub origins: Vec<Origin>,
    pub n_ext: usize,
    pub n_int: usize,
}

impl OutlierSet {
    pub fn empty() -> Self {
        Self { graphs: Vec::new(), origins: Vec::new(), n_ext: 0, n_int: 0 }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Samples the external share from the pool, takes the internal share from
/// `internal` in order, and shuffles the union.
pub fn assemble_oe_set(pool: &OutlierPool, internal: &[Graph], config: &SynthesisConfig) -> Result<OutlierSet> {
    config.validate()?;
    let (n_ext, n_int) = config.split_counts();
    if pool.len() < n_ext {
        return Err(Error::Assembly(format!(
            "external pool has {} graphs, {n_ext} requested (short by {})",
            pool.len(),
            n_ext - pool.len()
        )));
    }
    if internal.len() < n_int {
        return Err(Error::Assembly(format!(
            "{} internal outliers available, {n_int} requested (short by {})",
            internal.len(),
            n_int - internal.len()
        )));
    }
    let mut rng = rng::stream(config.seed, rng::task::EXTERNAL_SAMPLE);
    let picked = index::sample(&mut rng, pool.len(), n_ext).into_vec();
    let mut tagged: Vec<(Graph, Origin)> = picked
        .into_iter()
        .map(|i| (pool.graphs[i].clone(), Origin::External))
        .chain(internal[..n_int].iter().map(|g| (g.clone(), Origin::Internal)))
        .collect();
    tagged.shuffle(&mut rng::stream(config.seed, rng::task::OE_SHUFFLE));
    let (graphs, origins) = tagged.into_iter().unzip();
    Ok(OutlierSet { graphs, origins, n_ext, n_int })
}
