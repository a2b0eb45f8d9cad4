//! Step-function graphons: USVT estimation from a group of graphs, convex
//! mixup of two graphons, and random-size graph sampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Topology};

/// Symmetric `D × D` matrix of edge probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Graphon {
    resolution: usize,
    values: Vec<f64>,
}

impl Graphon {
    /// Validates symmetry, range `[0, 1]` and `D >= 2`.
    pub fn new(resolution: usize, values: Vec<f64>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Size(format!("graphon resolution {resolution} is below 2")));
        }
        if values.len() != resolution * resolution {
            return Err(Error::Dimension { expected: resolution * resolution, found: values.len() });
        }
        for i in 0..resolution {
            for j in 0..resolution {
                let v = values[i * resolution + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!("graphon entry ({i}, {j}) = {v} outside [0, 1]")));
                }
                if v != values[j * resolution + i] {
                    return Err(Error::Domain(format!("graphon is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { resolution, values })
    }

    pub fn constant(resolution: usize, p: f64) -> Result<Self> {
        Self::new(resolution, vec![p; resolution * resolution])
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.resolution + j]
    }

    /// Row-major entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.resolution)
    }
}

/// How nodes of differently-labeled graphs are put in correspondence before
/// averaging.
///
/// Every data-driven ordering of a structureless graph manufactures structure
/// (sorting Erdős–Rényi graphs by degree puts the densest pairs in one
/// corner), so the default only reorders when the signal clears the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NodeAlignment {
    /// Degree descending, ties by node index.
    Degree,
    /// Fiedler vector of the graph Laplacian, oriented so high-degree nodes
    /// come first, ties by node index.
    Spectral,
    /// Per graph: if a non-leading adjacency eigenvalue exceeds the
    /// random-matrix bulk edge `2·√(n·p(1-p))` by [`SIGNAL_MARGIN`], order by
    /// its eigenvector; else if the degree variance exceeds the binomial null
    /// by [`DEGREE_SIGMAS`] standard errors, sort by degree; else keep input
    /// order.
    #[default]
    Adaptive,
}

/// Relative margin over the bulk edge for a spectral community signal.
pub const SIGNAL_MARGIN: f64 = 0.25;
/// Standard errors of the degree-variance ratio needed to call degrees
/// informative.
pub const DEGREE_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct UsvtConfig {
    /// Singular values below `coefficient · √D` are dropped. `None` uses
    /// `2.02 · √(mean edge density of the averaged matrix)`.
    pub svt_coefficient: Option<f64>,
    pub alignment: NodeAlignment,
}

impl Default for UsvtConfig {
    fn default() -> Self {
        Self { svt_coefficient: None, alignment: NodeAlignment::Adaptive }
    }
}

/// Common graphon resolution for a set of training graphs: the 90th
/// percentile (nearest rank) of node counts, capped at `cap`, at least 2.
pub fn common_resolution<I: IntoIterator<Item = usize>>(node_counts: I, cap: usize) -> usize {
    let mut counts: Vec<usize> = node_counts.into_iter().collect();
    if counts.is_empty() {
        return 2;
    }
    counts.sort_unstable();
    let rank = libm::ceil(0.9 * counts.len() as f64) as usize;
    counts[rank.max(1) - 1].min(cap).max(2)
}

fn degree_order(topology: &Topology, nodes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut order: Vec<usize> = nodes.collect();
    order.sort_by(|&a, &b| topology.degree(b).cmp(&topology.degree(a)).then(a.cmp(&b)));
    order
}

fn fiedler_order(topology: &Topology) -> Vec<usize> {
    let n = topology.node_count();
    if n <= 2 {
        return degree_order(topology, 0..n);
    }
    let laplacian = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            topology.degree(i) as f64
        } else if topology.has_edge(i, j) {
            -1.0
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(laplacian);
    let mut by_value: Vec<usize> = (0..n).collect();
    by_value.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    order_by_vector(topology, eig.eigenvectors.column(by_value[1]).iter().copied().collect())
}

fn adaptive_order(topology: &Topology) -> Vec<usize> {
    let n = topology.node_count();
    let pairs = (n * n.saturating_sub(1) / 2) as f64;
    let density = if pairs > 0.0 { topology.edge_count() as f64 / pairs } else { 0.0 };
    if n <= 3 || density <= 0.0 || density >= 1.0 {
        return (0..n).collect();
    }
    let adjacency = DMatrix::<f64>::from_fn(n, n, |i, j| if topology.has_edge(i, j) { 1.0 } else { 0.0 });
    let eig = SymmetricEigen::new(adjacency);
    let mut by_value: Vec<usize> = (0..n).collect();
    by_value.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let second = by_value[1];
    let lowest = by_value[n - 1];
    let signal = if eig.eigenvalues[second].abs() >= eig.eigenvalues[lowest].abs() { second } else { lowest };
    let bulk_edge = 2.0 * libm::sqrt(n as f64 * density * (1.0 - density));
    if eig.eigenvalues[signal].abs() > (1.0 + SIGNAL_MARGIN) * bulk_edge {
        return order_by_vector(topology, eig.eigenvectors.column(signal).iter().copied().collect());
    }

    let mean = 2.0 * topology.edge_count() as f64 / n as f64;
    let var = (0..n).map(|i| (topology.degree(i) as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let null_var = (n - 1) as f64 * density * (1.0 - density);
    if var / null_var > 1.0 + DEGREE_SIGMAS * libm::sqrt(2.0 / (n - 1) as f64) {
        return degree_order(topology, 0..n);
    }
    (0..n).collect()
}

/// Sorts nodes by `key` descending after orienting it to correlate positively
/// with degree; exact ties by node index.
fn order_by_vector(topology: &Topology, mut key: Vec<f64>) -> Vec<usize> {
    let n = topology.node_count();
    let corr: f64 = key.iter().enumerate().map(|(i, v)| v * topology.degree(i) as f64).sum();
    let flip = if corr.abs() > 1e-9 {
        corr < 0.0
    } else {
        // regular graphs: orient by the largest-magnitude entry
        let mut pivot = 0;
        for (i, v) in key.iter().enumerate() {
            if v.abs() > key[pivot].abs() + 1e-12 {
                pivot = i;
            }
        }
        key[pivot] < 0.0
    };
    if flip {
        key.iter_mut().for_each(|v| *v = -*v);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    order
}

/// Aligned `D × D` adjacency of one graph: keep the `D` highest-degree nodes
/// when the graph is larger, order them per `alignment`, zero-pad when
/// smaller.
pub fn aligned_adjacency(topology: &Topology, resolution: usize, alignment: NodeAlignment) -> Vec<f64> {
    let n = topology.node_count();
    let kept = if n > resolution {
        let mut top = degree_order(topology, 0..n);
        top.truncate(resolution);
        top.sort_unstable();
        top
    } else {
        (0..n).collect()
    };
    let sub = if kept.len() < n { topology.induced(&kept) } else { topology.clone() };
    let order = match alignment {
        NodeAlignment::Degree => degree_order(&sub, 0..sub.node_count()),
        NodeAlignment::Spectral => fiedler_order(&sub),
        NodeAlignment::Adaptive => adaptive_order(&sub),
    };
    let mut position = vec![0usize; sub.node_count()];
    for (rank, &v) in order.iter().enumerate() {
        position[v] = rank;
    }
    let mut out = vec![0.0; resolution * resolution];
    for (i, j) in sub.edges() {
        let (a, b) = (position[i], position[j]);
        out[a * resolution + b] = 1.0;
        out[b * resolution + a] = 1.0;
    }
    out
}

/// Estimates one graphon from a group of graphs by universal singular value
/// thresholding of their aligned, averaged adjacency matrices.
pub fn estimate_graphon_usvt(graphs: &[&Graph], resolution: usize, config: &UsvtConfig) -> Result<Graphon> {
    if graphs.is_empty() {
        return Err(Error::Estimation("cannot estimate a graphon from zero graphs".into()));
    }
    if resolution < 2 {
        return Err(Error::Size(format!("graphon resolution {resolution} is below 2")));
    }
    let d = resolution;
    let mut mean = vec![0.0; d * d];
    for g in graphs {
        let aligned = aligned_adjacency(g.topology(), d, config.alignment);
        mean.iter_mut().zip(&aligned).for_each(|(m, a)| *m += a);
    }
    let count = graphs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= count);

    let coefficient = config.svt_coefficient.unwrap_or_else(|| {
        let off_diag: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| mean[i * d + j])
            .sum();
        2.02 * libm::sqrt(off_diag / (d * (d - 1)) as f64)
    });
    let threshold = coefficient * libm::sqrt(d as f64);

    // symmetric input: singular values are |eigenvalues|
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &mean));
    let mut recon = vec![0.0; d * d];
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() < threshold {
            continue;
        }
        let u = eig.eigenvectors.column(k);
        for i in 0..d {
            let ui = lambda * u[i];
            for j in 0..d {
                recon[i * d + j] += ui * u[j];
            }
        }
    }
    recon.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    let mut values = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            values[i * d + j] = (recon[i * d + j] + recon[j * d + i]) / 2.0;
        }
    }
    Graphon::new(d, values)
}

/// `M = λ·W_i + (1 - λ)·W_j`, entrywise.
pub fn mixup_graphons(w_i: &Graphon, w_j: &Graphon, lambda: f64) -> Result<Graphon> {
    if w_i.resolution != w_j.resolution {
        return Err(Error::Dimension { expected: w_i.resolution, found: w_j.resolution });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("mixup weight {lambda} outside [0, 1]")));
    }
    let values = w_i
        .values
        .iter()
        .zip(&w_j.values)
        .map(|(&a, &b)| (lambda * a + (1.0 - lambda) * b).clamp(0.0, 1.0))
        .collect();
    Ok(Graphon { resolution: w_i.resolution, values })
}

/// Graph size drawn uniformly from `{2, ..., max_nodes}`.
pub fn random_size<R: Rng + ?Sized>(max_nodes: usize, rng: &mut R) -> Result<usize> {
    if max_nodes < 2 {
        return Err(Error::Size(format!("maximum size {max_nodes} leaves no size in [2, N]")));
    }
    Ok(rng.random_range(2..=max_nodes))
}

/// `r × r` graphon induced by `r` i.i.d. uniform latent positions.
pub fn downsample_graphon<R: Rng + ?Sized>(graphon: &Graphon, r: usize, rng: &mut R) -> Result<Graphon> {
    check_sample_size(graphon, r)?;
    let latents: Vec<f64> = (0..r).map(|_| rng.random::<f64>()).collect();
    downsample_at(graphon, &latents)
}

fn check_sample_size(graphon: &Graphon, r: usize) -> Result<()> {
    if r < 2 || r > graphon.resolution {
        return Err(Error::Size(format!(
            "sample size {r} outside [2, {}]",
            graphon.resolution
        )));
    }
    Ok(())
}

/// Downsampling at given latent positions: positions are sorted ascending and
/// `u` maps to step `⌈u·D⌉` (clamped to `[1, D]`, 1-based).
pub fn downsample_at(graphon: &Graphon, latents: &[f64]) -> Result<Graphon> {
    check_sample_size(graphon, latents.len())?;
    let d = graphon.resolution;
    let mut sorted = latents.to_vec();
    sorted.sort_by(f64::total_cmp);
    let index: Vec<usize> = sorted
        .iter()
        .map(|&u| (libm::ceil(u * d as f64) as usize).clamp(1, d) - 1)
        .collect();
    let r = index.len();
    let mut values = vec![0.0; r * r];
    for (a, &i) in index.iter().enumerate() {
        for (b, &j) in index.iter().enumerate() {
            values[a * r + b] = graphon.get(i, j);
        }
    }
    Ok(Graphon { resolution: r, values })
}

/// Independent Bernoulli edges: `(i, j)`, `i < j`, present with probability
/// `M'(i, j)`.
pub fn bernoulli_sample<R: Rng + ?Sized>(probabilities: &Graphon, rng: &mut R) -> Topology {
    let r = probabilities.resolution;
    let mut edges = Vec::new();
    for i in 0..r {
        for j in i + 1..r {
            if rng.random::<f64>() < probabilities.get(i, j) {
                edges.push((i, j));
            }
        }
    }
    Topology::from_edges(r, edges).expect("indices below r")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::simple_graph;
    use crate::rng::stream;

    fn complete(n: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        simple_graph(n, &edges)
    }

    #[test]
    fn complete_graphs_estimate_near_one() {
        let graphs: Vec<Graph> = (0..50).map(|_| complete(50)).collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        for alignment in [NodeAlignment::Degree, NodeAlignment::Spectral, NodeAlignment::Adaptive] {
            let cfg = UsvtConfig { alignment, ..UsvtConfig::default() };
            let w = estimate_graphon_usvt(&refs, 50, &cfg).unwrap();
            assert!(w.values().iter().all(|&x| x >= 0.95), "{alignment:?}");
        }
    }

    #[test]
    fn estimation_needs_graphs() {
        assert!(matches!(
            estimate_graphon_usvt(&[], 10, &UsvtConfig::default()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn aligned_adjacency_pads_and_truncates() {
        // star with 4 leaves: hub first under degree order
        let star = simple_graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let a = aligned_adjacency(star.topology(), 7, NodeAlignment::Degree);
        assert_eq!(a[1], 1.0);
        assert_eq!(a[5 * 7 + 6], 0.0);
        assert_eq!(a.iter().sum::<f64>(), 8.0);
        // truncated to the hub plus the two lowest-index leaves
        let t = aligned_adjacency(star.topology(), 3, NodeAlignment::Degree);
        assert_eq!(t, vec![0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn spectral_alignment_groups_communities() {
        // two triangles joined by one edge, interleaved labels
        let g = simple_graph(6, &[(0, 2), (2, 4), (0, 4), (1, 3), (3, 5), (1, 5), (4, 5)]);
        let a = aligned_adjacency(g.topology(), 6, NodeAlignment::Spectral);
        let block = |r: core::ops::Range<usize>, c: core::ops::Range<usize>| -> f64 {
            r.flat_map(|i| c.clone().map(move |j| (i, j))).map(|(i, j)| a[i * 6 + j]).sum()
        };
        assert_eq!(block(0..3, 0..3), 6.0);
        assert_eq!(block(3..6, 3..6), 6.0);
        assert_eq!(block(0..3, 3..6), 1.0);
    }

    #[test]
    fn adaptive_keeps_input_order_without_signal() {
        let g = simple_graph(6, &[(0, 2), (2, 4), (0, 4), (1, 3), (3, 5), (1, 5), (4, 5)]);
        assert_eq!(aligned_adjacency(g.topology(), 6, NodeAlignment::Adaptive), g.topology().to_dense());
    }

    #[test]
    fn mixup_identities() {
        let a = Graphon::constant(4, 0.2).unwrap();
        let b = Graphon::constant(4, 0.8).unwrap();
        assert_eq!(mixup_graphons(&a, &b, 1.0).unwrap(), a);
        assert_eq!(mixup_graphons(&a, &b, 0.0).unwrap(), b);
        let mid = mixup_graphons(&a, &b, 0.5).unwrap();
        assert!(mid.values().iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn mixup_guards() {
        let a = Graphon::constant(4, 0.2).unwrap();
        let b = Graphon::constant(5, 0.2).unwrap();
        assert!(matches!(mixup_graphons(&a, &b, 0.5), Err(Error::Dimension { .. })));
        assert!(matches!(mixup_graphons(&a, &a, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn random_size_range_and_determinism() {
        let mut rng = stream(1, 0);
        assert!((0..100).all(|_| random_size(2, &mut rng).unwrap() == 2));
        assert!(random_size(1, &mut rng).is_err());
        let a = random_size(50, &mut stream(9, 3)).unwrap();
        let b = random_size(50, &mut stream(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn downsample_even_latents_is_identity() {
        let mut values = vec![0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                values[i * 4 + j] = ((i + j) as f64) / 8.0;
            }
        }
        let w = Graphon::new(4, values).unwrap();
        let latents: Vec<f64> = (0..4).map(|k| (k as f64 + 0.5) / 4.0).collect();
        assert_eq!(downsample_at(&w, &latents).unwrap(), w);
    }

    #[test]
    fn downsample_two_block_lookup() {
        let d = 10;
        let values = (0..d * d)
            .map(|x| if (x / d < 5) == (x % d < 5) { 0.8 } else { 0.2 })
            .collect();
        let w = Graphon::new(d, values).unwrap();
        let m = downsample_at(&w, &[0.9, 0.1]).unwrap();
        assert_eq!(m.values(), &[0.8, 0.2, 0.2, 0.8]);
    }

    #[test]
    fn downsample_constant_and_range() {
        let w = Graphon::constant(20, 0.3).unwrap();
        let mut rng = stream(2, 0);
        let m = downsample_graphon(&w, 7, &mut rng).unwrap();
        assert_eq!(m.resolution(), 7);
        assert!(m.values().iter().all(|&x| x == 0.3));
        assert!(downsample_graphon(&w, 21, &mut rng).is_err());
        assert!(downsample_graphon(&w, 1, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rng = stream(3, 0);
        let full = bernoulli_sample(&Graphon::constant(6, 1.0).unwrap(), &mut rng);
        assert_eq!(full.edge_count(), 15);
        let none = bernoulli_sample(&Graphon::constant(6, 0.0).unwrap(), &mut rng);
        assert_eq!(none.edge_count(), 0);
    }

    #[test]
    fn graphon_validation() {
        assert!(Graphon::new(2, vec![0.0, 0.1, 0.2, 0.0]).is_err());
        assert!(Graphon::new(2, vec![0.0, 1.1, 1.1, 0.0]).is_err());
        assert!(Graphon::constant(1, 0.5).is_err());
    }

    #[test]
    fn resolution_percentile() {
        assert_eq!(common_resolution((1..=10).map(|x| x * 10), 200), 90);
        assert_eq!(common_resolution([500, 600, 700], 200), 200);
        assert_eq!(common_resolution([1, 1], 200), 2);
    }
}
