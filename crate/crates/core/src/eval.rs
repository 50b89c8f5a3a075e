//! Scoring recovered structure against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn pairs(count: u64) -> u128 {
    let c = count as u128;
    c * c.saturating_sub(1) / 2
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Computed from exact integer pair counts with a single final division.
/// When the partitions carry no pair information beyond chance
/// (`max == expected`), both are the same trivial partition and the score
/// is 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    if a.len() < 2 {
        return Err(Error::InvalidData("adjusted Rand index needs at least 2 items".into()));
    }
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: u128 = joint.values().map(|&c| pairs(c)).sum();
    let sum_a: u128 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: u128 = cols.values().map(|&c| pairs(c)).sum();
    Ok(ari_from_pair_counts(index, sum_a, sum_b, pairs(a.len() as u64)))
}

/// `(index - expected) / (max - expected)` with `expected = sum_a sum_b / total`
/// and `max = (sum_a + sum_b) / 2`, scaled by `2 total` to stay in integers.
pub(crate) fn ari_from_pair_counts(index: u128, sum_a: u128, sum_b: u128, total: u128) -> f64 {
    let numerator = 2 * total as i128 * index as i128 - 2 * (sum_a * sum_b) as i128;
    let denominator = total as i128 * (sum_a + sum_b) as i128 - 2 * (sum_a * sum_b) as i128;
    if denominator == 0 {
        return if numerator == 0 { 1.0 } else { 0.0 };
    }
    numerator as f64 / denominator as f64
}

/// Agreement between two binary labelings, up to swapping the labels.
pub fn binary_factor_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&v| v > 1) {
        return Err(Error::NotBinary(bad));
    }
    let agree = pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64;
    Ok(agree.max(1.0 - agree))
}

/// Counts of truth label (rows) against predicted label (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Distinct truth labels in ascending order; row `t` is `truth_labels[t]`.
    pub truth_labels: Vec<usize>,
    pub pred_labels: Vec<usize>,
    pub counts: Vec<Vec<usize>>,
    /// Greedy one-to-one pairing of truth label to predicted label, made by
    /// repeatedly taking the largest remaining cell. For display only.
    pub matching: Vec<(usize, usize)>,
}

impl ConfusionMatrix {
    /// Counts with columns reordered so matched predictions sit on the
    /// diagonal; unmatched prediction columns follow in label order.
    pub fn matched_counts(&self) -> Vec<Vec<usize>> {
        let col_of = |label: usize| self.pred_labels.iter().position(|&p| p == label).unwrap();
        let mut order: Vec<usize> = Vec::new();
        for &t in &self.truth_labels {
            if let Some(&(_, p)) = self.matching.iter().find(|(mt, _)| *mt == t) {
                order.push(col_of(p));
            }
        }
        for c in 0..self.pred_labels.len() {
            if !order.contains(&c) {
                order.push(c);
            }
        }
        self.counts
            .iter()
            .map(|row| order.iter().map(|&c| row[c]).collect())
            .collect()
    }
}

pub fn confusion_matrix(pred: &[usize], truth: &[usize]) -> Result<ConfusionMatrix> {
    check_lengths(pred, truth)?;
    let mut truth_labels: Vec<usize> = truth.to_vec();
    truth_labels.sort_unstable();
    truth_labels.dedup();
    let mut pred_labels: Vec<usize> = pred.to_vec();
    pred_labels.sort_unstable();
    pred_labels.dedup();

    let mut counts = vec![vec![0usize; pred_labels.len()]; truth_labels.len()];
    for (&p, &t) in pred.iter().zip(truth) {
        let r = truth_labels.binary_search(&t).unwrap();
        let c = pred_labels.binary_search(&p).unwrap();
        counts[r][c] += 1;
    }

    let mut cells: Vec<(usize, usize, usize)> = counts
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, &n)| (n, r, c)))
        .filter(|&(n, _, _)| n > 0)
        .collect();
    // largest count first; ties broken by truth row, then by the
    // prediction's row-count profile so relabeling cannot change the pairing
    cells.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then_with(|| {
        let profile = |c: usize| counts.iter().map(|row| row[c]).collect::<Vec<_>>();
        profile(y.2).cmp(&profile(x.2))
    }));
    let mut used_rows = vec![false; truth_labels.len()];
    let mut used_cols = vec![false; pred_labels.len()];
    let mut matching = Vec::new();
    for (_, r, c) in cells {
        if !used_rows[r] && !used_cols[c] {
            used_rows[r] = true;
            used_cols[c] = true;
            matching.push((truth_labels[r], pred_labels[c]));
        }
    }
    matching.sort_unstable();
    Ok(ConfusionMatrix {
        truth_labels,
        pred_labels,
        counts,
        matching,
    })
}

/// ARI over items labeled on both sides; items with `None` on either side
/// are left out and counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialAri {
    pub ari: f64,
    pub scored: usize,
    pub excluded: usize,
}

pub fn adjusted_rand_index_partial(pred: &[Option<usize>], truth: &[Option<usize>]) -> Result<PartialAri> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let (a, b): (Vec<usize>, Vec<usize>) = pred
        .iter()
        .zip(truth)
        .filter_map(|(p, t)| Some(((*p)?, (*t)?)))
        .unzip();
    let excluded = pred.len() - a.len();
    Ok(PartialAri {
        ari: adjusted_rand_index(&a, &b)?,
        scored: a.len(),
        excluded,
    })
}

/// One metric emitted by the evaluation commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scored: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excluded: Option<usize>,
}
