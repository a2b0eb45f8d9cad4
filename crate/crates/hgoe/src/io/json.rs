//! JSON interchange format for datasets and outlier sets.

use std::fs;
use std::path::Path;

use hgoe_core::graph::{Graph, GraphDataset, Topology};
use hgoe_core::synth::{Origin, OutlierSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    n: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<Origin>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRecord {
    name: String,
    feature_dim: usize,
    graphs: Vec<GraphRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

fn to_record(graph: &Graph, dataset: &str, origin: Option<Origin>) -> GraphRecord {
    GraphRecord {
        n: graph.node_count(),
        edges: graph.topology().edges().map(|(i, j)| [i, j]).collect(),
        features: (0..graph.node_count()).map(|v| graph.feature_row(v).to_vec()).collect(),
        source: (graph.source_dataset() != dataset).then(|| graph.source_dataset().to_string()),
        origin,
    }
}

fn from_record(path: &Path, index: usize, record: GraphRecord, dataset: &str, feature_dim: usize) -> Result<Graph> {
    let context = |msg: String| Error::format(path, 0, format!("graph {index}: {msg}"));
    if let Some([i, j]) = record.edges.iter().find(|[i, j]| *i >= record.n || *j >= record.n) {
        return Err(context(format!("edge [{i}, {j}] has an index >= n = {}", record.n)));
    }
    if record.features.len() != record.n {
        return Err(context(format!("{} feature rows for n = {}", record.features.len(), record.n)));
    }
    if let Some((v, row)) = record.features.iter().enumerate().find(|(_, r)| r.len() != feature_dim) {
        return Err(context(format!("feature row {v} has {} values, expected {feature_dim}", row.len())));
    }
    let topology = Topology::from_edges(record.n, record.edges.iter().map(|&[i, j]| (i, j)))?;
    let features: Vec<f64> = record.features.into_iter().flatten().collect();
    let source = record.source.as_deref().unwrap_or(dataset);
    Ok(Graph::new(topology, features, feature_dim, source, index)?)
}

fn read_record(path: &Path) -> Result<DatasetRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

fn write_record(path: &Path, record: &DatasetRecord) -> Result<()> {
    let text = serde_json::to_string(record).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads `{"name", "feature_dim", "graphs": [{"n", "edges", "features"}]}`
/// with 0-based node ids. Graph ids are positions in the file.
pub fn load_json_dataset(path: &Path) -> Result<GraphDataset> {
    let record = read_record(path)?;
    let graphs = record
        .graphs
        .into_iter()
        .enumerate()
        .map(|(i, g)| from_record(path, i, g, &record.name, record.feature_dim))
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphDataset::new(record.name, record.feature_dim, graphs)?)
}

/// Writes edges as `i < j` pairs in ascending order. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_json_dataset(path: &Path, dataset: &GraphDataset, config_digest: Option<&str>) -> Result<()> {
    let record = DatasetRecord {
        name: dataset.name().to_string(),
        feature_dim: dataset.feature_dim(),
        graphs: dataset.graphs().iter().map(|g| to_record(g, dataset.name(), None)).collect(),
        config_digest: config_digest.map(str::to_string),
    };
    write_record(path, &record)
}

/// An outlier set in the dataset format, each graph tagged with its origin.
pub fn write_outlier_set(path: &Path, set: &OutlierSet, feature_dim: usize, config_digest: Option<&str>) -> Result<()> {
    let name = "outliers";
    let record = DatasetRecord {
        name: name.to_string(),
        feature_dim,
        graphs: set.graphs.iter().zip(&set.origins).map(|(g, &o)| to_record(g, name, Some(o))).collect(),
        config_digest: config_digest.map(str::to_string),
    };
    write_record(path, &record)
}

pub fn load_outlier_set(path: &Path) -> Result<OutlierSet> {
    let record = read_record(path)?;
    let mut set = OutlierSet::empty();
    for (i, g) in record.graphs.into_iter().enumerate() {
        let origin = g
            .origin
            .ok_or_else(|| Error::format(path, 0, format!("graph {i} has no \"origin\"")))?;
        let graph = from_record(path, i, g, &record.name, record.feature_dim)?;
        match origin {
            Origin::External => set.n_ext += 1,
            Origin::Internal => set.n_int += 1,
        }
        set.graphs.push(graph);
        set.origins.push(origin);
    }
    Ok(set)
}
