//! CSV and JSON artifacts. CSV files start with a `# config_digest=...`
//! comment line when a digest is given.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hgoe_core::detector::{EpochRecord, LossParams, ScoreRecord, ScoringModel};
use hgoe_core::embed::GraphEmbedding;
use hgoe_core::graphon::Graphon;
use hgoe_core::metrics::score_histogram;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

fn csv_header(digest: Option<&str>, columns: &str) -> String {
    let mut out = String::new();
    if let Some(d) = digest {
        let _ = writeln!(out, "# config_digest={d}");
    }
    out.push_str(columns);
    out.push('\n');
    out
}

/// `x` to 6 significant digits without trailing zeros.
pub fn six_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let s = format!("{:.5e}", x);
    let parsed: f64 = s.parse().expect("formatted float parses");
    let plain = format!("{parsed}");
    if plain.len() <= 12 {
        plain
    } else {
        s
    }
}

/// Columns `bin_lo,bin_hi,id_count,ood_count`.
pub fn export_score_histogram(records: &[ScoreRecord], bins: usize, path: &Path, digest: Option<&str>) -> Result<()> {
    let hist = score_histogram(records, bins)?;
    let mut out = csv_header(digest, "bin_lo,bin_hi,id_count,ood_count");
    for b in hist {
        let _ = writeln!(out, "{},{},{},{}", b.lo, b.hi, b.id_count, b.ood_count);
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphonMetadata {
    pub resolution: usize,
    /// Subgroups the graphon was estimated from or mixed between.
    pub subgroups: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

/// Row-major CSV at `path` plus `<stem>.json` metadata beside it.
pub fn export_graphon_heatmap(graphon: &Graphon, path: &Path, metadata: &GraphonMetadata) -> Result<()> {
    let mut out = String::new();
    if let Some(d) = &metadata.config_digest {
        let _ = writeln!(out, "# config_digest={d}");
    }
    for row in graphon.rows() {
        let cells: Vec<String> = row.iter().map(|&v| six_significant(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)?;
    write_json(&path.with_extension("json"), metadata)
}

/// Reads a heatmap CSV back into a graphon.
pub fn load_graphon_csv(path: &Path) -> Result<Graphon> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        for cell in line.split(',') {
            values.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(path, i + 1, format!("cannot parse '{cell}'")))?,
            );
        }
        rows += 1;
    }
    Ok(Graphon::new(rows, values)?)
}

/// One row per graph: `graph_id,e0,e1,...`.
pub fn export_embeddings(ids: &[usize], embeddings: &[GraphEmbedding], path: &Path, digest: Option<&str>) -> Result<()> {
    let dim = embeddings.first().map_or(0, |e| e.dim());
    let columns: Vec<String> = std::iter::once("graph_id".to_string()).chain((0..dim).map(|k| format!("e{k}"))).collect();
    let mut out = csv_header(digest, &columns.join(","));
    for (id, e) in ids.iter().zip(embeddings) {
        let _ = write!(out, "{id}");
        for v in e.as_slice() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Columns `epoch,total,id_term,oe_term,tau`.
pub fn export_loss_history(history: &[EpochRecord], path: &Path, digest: Option<&str>) -> Result<()> {
    let mut out = csv_header(digest, "epoch,total,id_term,oe_term,tau");
    for r in history {
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.loss.total, r.loss.id_term, r.loss.oe_term, r.tau);
    }
    write_text(path, &out)
}

/// A trained model with the loss settings it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_digest: String,
    pub seed: u64,
    pub loss: LossParams,
    pub model: ScoringModel,
}

#[cfg(test)]
mod tests {
    use super::*;
    use hgoe_core::graph::Label;

    #[test]
    fn significant_digits() {
        assert_eq!(six_significant(0.5), "0.5");
        assert_eq!(six_significant(1.0 / 3.0), "0.333333");
        assert_eq!(six_significant(0.1234567), "0.123457");
        assert_eq!(six_significant(1.0), "1");
        assert_eq!(six_significant(0.0), "0");
        assert_eq!(six_significant(1.23456789e-9), "1.23457e-9");
    }

    #[test]
    fn graphon_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f64> = (0..9).map(|k| [0.1234567, 0.5, 1.0 / 3.0][k % 3]).collect();
        let mut sym = values.clone();
        for i in 0..3 {
            for j in 0..3 {
                sym[i * 3 + j] = values[i.min(j) * 3 + i.max(j)];
            }
        }
        let g = Graphon::new(3, sym).unwrap();
        let path = dir.path().join("g.csv");
        let meta = GraphonMetadata { resolution: 3, subgroups: vec![0, 1], lambda: Some(0.25), config_digest: Some("d".into()) };
        export_graphon_heatmap(&g, &path, &meta).unwrap();
        let back = load_graphon_csv(&path).unwrap();
        for (a, b) in back.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 1e-6);
        }
        let meta_back: GraphonMetadata = read_json(&path.with_extension("json")).unwrap();
        assert_eq!(meta_back, meta);

        let half = Graphon::constant(4, 0.5).unwrap();
        export_graphon_heatmap(&half, &path, &GraphonMetadata { resolution: 4, subgroups: vec![], lambda: None, config_digest: None })
            .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.split(',').all(|c| c == "0.5")));
    }

    #[test]
    fn histogram_conserves_counts() {
        let records: Vec<ScoreRecord> = (0..30)
            .map(|i| ScoreRecord::new(i, i as f64 / 3.0 - 5.0, Some(if i % 3 == 0 { Label::Ood } else { Label::Id })))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        export_score_histogram(&records, 7, &path, Some("abc")).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# config_digest=abc"));
        assert_eq!(lines.next(), Some("bin_lo,bin_hi,id_count,ood_count"));
        let (mut id, mut ood) = (0, 0);
        for l in lines {
            let f: Vec<&str> = l.split(',').collect();
            id += f[2].parse::<usize>().unwrap();
            ood += f[3].parse::<usize>().unwrap();
        }
        assert_eq!((id, ood), (20, 10));
    }

    #[test]
    fn io_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = export_loss_history(&[], &blocker.join("sub.csv"), None).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }
}
