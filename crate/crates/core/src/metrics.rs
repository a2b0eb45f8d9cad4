//! Detection metrics.

use alloc::format;
use alloc::vec::Vec;

use crate::detector::ScoreRecord;
use crate::error::{Error, Result};
use crate::graph::Label;

/// Area under the ROC curve with OOD as the positive class.
///
/// Computed as the Mann-Whitney statistic from mid-ranks: the fraction of
/// (OOD, ID) pairs where the OOD graph scores higher, ties counting one half.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { expected: scores.len(), found: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Metric(format!("score {i} is NaN")));
    }
    let positives = labels.iter().filter(|&&l| l == Label::Ood).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes ({positives} OOD, {negatives} ID)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum keeps mid-ranks integral
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share the mid-rank (start + 1 + end) / 2
        let twice_mid = (start + 1 + end) as u128;
        let pos_in_tie = order[start..end].iter().filter(|&&i| labels[i] == Label::Ood).count() as u128;
        twice_rank_sum += twice_mid * pos_in_tie;
        start = end;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / 2.0 / (positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub id_count: usize,
    pub ood_count: usize,
}

/// Equal-width histogram of normalized scores over `[0, 1]`; each bin is
/// `[lo, hi)` except the last, which includes 1.
pub fn score_histogram(records: &[ScoreRecord], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::Metric("histogram needs at least one bin".into()));
    }
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: b as f64 / bins as f64,
            hi: (b + 1) as f64 / bins as f64,
            id_count: 0,
            ood_count: 0,
        })
        .collect();
    for (i, r) in records.iter().enumerate() {
        let label = r.label.ok_or_else(|| Error::Metric(format!("record {i} has no label")))?;
        let b = ((r.normalized * bins as f64) as usize).min(bins - 1);
        match label {
            Label::Id => out[b].id_count += 1,
            Label::Ood => out[b].ood_count += 1,
        }
    }
    Ok(out)
}
