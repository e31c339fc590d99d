//! Joins conformal set sizes with MC-dropout entropy.

use serde::{Deserialize, Serialize};

use crate::conformal::PredictionSets;
use crate::data::Labels;
use crate::error::{Result, UqError};
use crate::mcdropout::UncertaintyTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRecord {
    pub sample: usize,
    pub set_size: usize,
    pub predictive_entropy: f64,
    pub correct: bool,
}

/// One record per sample; `correct` compares the table's prediction with
/// the label.
pub fn join(sets: &PredictionSets, table: &UncertaintyTable, labels: &Labels) -> Result<Vec<JointRecord>> {
    let n = sets.len();
    for (what, len) in [("uncertainty table", table.len()), ("labels", labels.len())] {
        if len != n {
            return Err(UqError::LengthMismatch { what, expected: n, found: len });
        }
    }
    Ok(table
        .records
        .iter()
        .zip(labels.as_slice())
        .enumerate()
        .map(|(i, (r, &y))| JointRecord {
            sample: i,
            set_size: sets.size(i),
            predictive_entropy: r.predictive_entropy,
            correct: r.prediction == y,
        })
        .collect())
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` when either sequence is constant.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(UqError::LengthMismatch { what: "y", expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(UqError::InvalidArgument("spearman needs at least 2 points".into()));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSizeGroup {
    pub set_size: usize,
    pub count: usize,
    pub mean_entropy: f64,
    /// Population standard deviation within the group.
    pub std_entropy: f64,
}

/// Entropy statistics per distinct set size, ascending by size.
pub fn entropy_by_setsize(records: &[JointRecord]) -> Result<Vec<SetSizeGroup>> {
    if records.is_empty() {
        return Err(UqError::Empty("joint records"));
    }
    let max = records.iter().map(|r| r.set_size).max().unwrap_or(0);
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); max + 1];
    for r in records {
        groups[r.set_size].push(r.predictive_entropy);
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(set_size, g)| {
            let n = g.len() as f64;
            let mean = g.iter().sum::<f64>() / n;
            let var = g.iter().map(|h| (h - mean) * (h - mean)).sum::<f64>() / n;
            SetSizeGroup { set_size, count: g.len(), mean_entropy: mean, std_entropy: var.sqrt() }
        })
        .collect())
}
