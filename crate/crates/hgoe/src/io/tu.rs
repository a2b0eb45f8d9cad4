//! Reader for the TU benchmark plain-text layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hgoe_core::graph::{Graph, GraphDataset, Topology};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where node features come from when loading a TU dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeaturePolicy {
    /// Attributes if present, else one-hot node labels, else constant 1.
    #[default]
    Auto,
    Attributes,
    Labels,
    Constant,
}

fn component(directory: &Path, name: &str, suffix: &str) -> PathBuf {
    directory.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    if path.is_file() {
        fs::read_to_string(path).map(Some).map_err(|e| Error::io(path, e))
    } else {
        Ok(None)
    }
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::format(path, line, format!("cannot parse '{}'", field.trim())))
}

/// Loads `directory/NAME_A.txt` and `directory/NAME_graph_indicator.txt`,
/// plus optional attribute and label files.
///
/// Edges are symmetrized and deduplicated. Graph ids follow the order of the
/// indicator values. Node labels become one-hot vectors over the sorted set
/// of distinct labels.
pub fn load_tu_dataset(directory: &Path, name: &str, policy: FeaturePolicy) -> Result<GraphDataset> {
    let indicator_path = component(directory, name, "graph_indicator");
    let edges_path = component(directory, name, "A");
    let indicator_text = read_required(&indicator_path)?;
    let edges_text = read_required(&edges_path)?;

    let mut node_graph: Vec<u64> = Vec::new();
    for (line, text) in lines(&indicator_text) {
        node_graph.push(parse_field(&indicator_path, line, text)?);
    }
    // graph id (file value) -> (dataset position, global node ids)
    let mut members: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (node, &g) in node_graph.iter().enumerate() {
        members.entry(g).or_default().push(node);
    }
    let mut local = vec![0usize; node_graph.len()];
    for nodes in members.values() {
        for (i, &node) in nodes.iter().enumerate() {
            local[node] = i;
        }
    }
    let position: BTreeMap<u64, usize> = members.keys().enumerate().map(|(i, &g)| (g, i)).collect();

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); members.len()];
    for (line, text) in lines(&edges_text) {
        let (a, b) = text
            .split_once(',')
            .ok_or_else(|| Error::format(&edges_path, line, "expected 'i, j'"))?;
        let u: usize = parse_field(&edges_path, line, a)?;
        let v: usize = parse_field(&edges_path, line, b)?;
        for id in [u, v] {
            if id == 0 || id > node_graph.len() {
                return Err(Error::format(
                    &edges_path,
                    line,
                    format!("node {id} is outside 1..={}", node_graph.len()),
                ));
            }
        }
        let (gu, gv) = (node_graph[u - 1], node_graph[v - 1]);
        if gu != gv {
            return Err(Error::format(
                &edges_path,
                line,
                format!("edge ({u}, {v}) joins graph {gu} and graph {gv}"),
            ));
        }
        edges[position[&gu]].push((local[u - 1], local[v - 1]));
    }

    let features = node_features(directory, name, policy, node_graph.len())?;
    let feature_dim = features.dim;
    let graphs = members
        .values()
        .zip(edges)
        .enumerate()
        .map(|(gid, (nodes, edge_list))| {
            let topology = Topology::from_edges(nodes.len(), edge_list)?;
            let mut x = Vec::with_capacity(nodes.len() * feature_dim);
            for &node in nodes {
                x.extend_from_slice(&features.values[node * feature_dim..(node + 1) * feature_dim]);
            }
            Ok(Graph::new(topology, x, feature_dim, name, gid)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphDataset::new(name, feature_dim, graphs)?)
}

struct NodeFeatures {
    dim: usize,
    values: Vec<f64>,
}

fn node_features(directory: &Path, name: &str, policy: FeaturePolicy, nodes: usize) -> Result<NodeFeatures> {
    let attr_path = component(directory, name, "node_attributes");
    let label_path = component(directory, name, "node_labels");
    match policy {
        FeaturePolicy::Constant => Ok(NodeFeatures { dim: 1, values: vec![1.0; nodes] }),
        FeaturePolicy::Attributes => attributes(&attr_path, &read_required(&attr_path)?, nodes),
        FeaturePolicy::Labels => one_hot(&label_path, &read_required(&label_path)?, nodes),
        FeaturePolicy::Auto => {
            if let Some(text) = read_optional(&attr_path)? {
                attributes(&attr_path, &text, nodes)
            } else if let Some(text) = read_optional(&label_path)? {
                one_hot(&label_path, &text, nodes)
            } else {
                Ok(NodeFeatures { dim: 1, values: vec![1.0; nodes] })
            }
        }
    }
}

fn check_rows(path: &Path, rows: usize, nodes: usize, last_line: usize) -> Result<()> {
    if rows != nodes {
        return Err(Error::format(path, last_line, format!("{rows} rows for {nodes} nodes")));
    }
    Ok(())
}

fn attributes(path: &Path, text: &str, nodes: usize) -> Result<NodeFeatures> {
    let mut dim = None;
    let mut values = Vec::new();
    let mut rows = 0;
    let mut last = 0;
    for (line, row) in lines(text) {
        let fields: Vec<&str> = row.split(',').collect();
        match dim {
            None => dim = Some(fields.len()),
            Some(d) if d != fields.len() => {
                return Err(Error::format(path, line, format!("expected {d} attributes, found {}", fields.len())))
            }
            _ => {}
        }
        for f in fields {
            values.push(parse_field::<f64>(path, line, f)?);
        }
        rows += 1;
        last = line;
    }
    check_rows(path, rows, nodes, last)?;
    Ok(NodeFeatures { dim: dim.unwrap_or(1), values })
}

fn one_hot(path: &Path, text: &str, nodes: usize) -> Result<NodeFeatures> {
    let mut labels = Vec::with_capacity(nodes);
    let mut last = 0;
    for (line, row) in lines(text) {
        labels.push(parse_field::<i64>(path, line, row)?);
        last = line;
    }
    check_rows(path, labels.len(), nodes, last)?;
    let distinct: BTreeMap<i64, usize> = {
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        sorted.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };
    let dim = distinct.len().max(1);
    let mut values = vec![0.0; nodes * dim];
    for (node, l) in labels.iter().enumerate() {
        values[node * dim + distinct[l]] = 1.0;
    }
    Ok(NodeFeatures { dim, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
        fs::write(component(dir, name, suffix), body).unwrap();
    }

    fn fixture(dir: &Path) {
        // triangle on nodes 1-3, single edge 4-5, listed in both directions
        write(dir, "T", "A", "1, 2\n2, 1\n2, 3\n3, 1\n4, 5\n5, 4\n");
        write(dir, "T", "graph_indicator", "1\n1\n1\n2\n2\n");
    }

    #[test]
    fn two_graph_fixture() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_tu_dataset(dir.path(), "T", FeaturePolicy::Auto).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim(), 1);
        let tri = ds.graphs()[0].topology().to_dense();
        assert_eq!(tri, vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(ds.graphs()[1].topology().to_dense(), vec![0.0, 1.0, 1.0, 0.0]);
        assert!(ds.graphs().iter().all(|g| g.features().iter().all(|&x| x == 1.0)));
        assert_eq!(ds.graphs()[1].graph_id(), 1);
        assert_eq!(ds.graphs()[1].source_dataset(), "T");
    }

    #[test]
    fn labels_become_one_hot() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        write(dir.path(), "T", "node_labels", "7\n3\n3\n7\n0\n");
        let ds = load_tu_dataset(dir.path(), "T", FeaturePolicy::Auto).unwrap();
        assert_eq!(ds.feature_dim(), 3);
        assert_eq!(ds.graphs()[0].feature_row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(ds.graphs()[0].feature_row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(ds.graphs()[1].feature_row(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn attributes_take_precedence() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        write(dir.path(), "T", "node_labels", "1\n1\n1\n1\n1\n");
        write(dir.path(), "T", "node_attributes", "0.5, 1\n1,2\n2,3\n3,4\n4,5.25\n");
        let ds = load_tu_dataset(dir.path(), "T", FeaturePolicy::Auto).unwrap();
        assert_eq!(ds.feature_dim(), 2);
        assert_eq!(ds.graphs()[1].feature_row(1), &[4.0, 5.25]);
        let labelled = load_tu_dataset(dir.path(), "T", FeaturePolicy::Labels).unwrap();
        assert_eq!(labelled.feature_dim(), 1);
    }

    #[test]
    fn missing_indicator_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n");
        let err = load_tu_dataset(dir.path(), "T", FeaturePolicy::Auto).unwrap_err();
        assert!(err.to_string().contains("T_graph_indicator.txt"), "{err}");
    }

    #[test]
    fn cross_graph_edge_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        write(dir.path(), "T", "A", "1, 2\n3, 4\n");
        match load_tu_dataset(dir.path(), "T", FeaturePolicy::Auto).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        write(dir.path(), "T", "A", "1, 2\n\n1, 9\n");
        match load_tu_dataset(dir.path(), "T", FeaturePolicy::Auto).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn required_attributes_missing() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        assert!(matches!(
            load_tu_dataset(dir.path(), "T", FeaturePolicy::Attributes),
            Err(Error::MissingFile(_))
        ));
    }
}
