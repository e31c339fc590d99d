//! Expected calibration error, reliability tables, confusion matrices.

use serde::{Deserialize, Serialize};

use crate::data::{Labels, ProbMatrix};
use crate::error::{Result, UqError};

pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean confidence of the bin's samples; 0 for empty bins.
    pub mean_confidence: f64,
    /// Fraction of the bin's samples predicted correctly; 0 for empty bins.
    pub accuracy: f64,
}

/// Reliability table over `M` equal-width confidence bins plus the ECE it
/// implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub bins: Vec<ReliabilityBin>,
    pub n: usize,
    pub ece: f64,
}

impl ReliabilityBins {
    /// `sum_m |B_m|/N * |acc(B_m) - conf(B_m)|` recomputed from the table.
    pub fn recompute_ece(&self) -> f64 {
        let n = self.n as f64;
        self.bins
            .iter()
            .map(|b| b.count as f64 / n * (b.accuracy - b.mean_confidence).abs())
            .sum()
    }
}

/// Bin index for confidence `c`: bin 0 is `[0, 1/M]`, bin `m` is
/// `(m/M, (m+1)/M]`.
pub fn bin_index(confidence: f64, m: usize) -> usize {
    let mf = m as f64;
    let mut idx = ((confidence * mf).ceil() as isize - 1).clamp(0, m as isize - 1) as usize;
    // Keep edges consistent with `lo = b / M` (0.3 * 10 rounds above 3).
    if idx > 0 && confidence <= idx as f64 / mf {
        idx -= 1;
    }
    idx
}

/// ECE from raw (confidence, correct) pairs.
pub fn ece_from_confidences(confidence: &[f64], correct: &[bool], m: usize) -> Result<ReliabilityBins> {
    if confidence.is_empty() {
        return Err(UqError::Empty("ece input"));
    }
    if m == 0 {
        return Err(UqError::InvalidArgument("ECE needs at least one bin".into()));
    }
    if confidence.len() != correct.len() {
        return Err(UqError::LengthMismatch {
            what: "correctness flags",
            expected: confidence.len(),
            found: correct.len(),
        });
    }
    let mut count = vec![0usize; m];
    let mut conf_sum = vec![0.0; m];
    let mut hits = vec![0usize; m];
    for (&c, &ok) in confidence.iter().zip(correct) {
        let b = bin_index(c, m);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(ok);
    }
    let bins = (0..m)
        .map(|b| {
            let (mean_confidence, accuracy) = if count[b] == 0 {
                (0.0, 0.0)
            } else {
                let k = count[b] as f64;
                (conf_sum[b] / k, hits[b] as f64 / k)
            };
            ReliabilityBin {
                lo: b as f64 / m as f64,
                hi: (b + 1) as f64 / m as f64,
                count: count[b],
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    let mut table = ReliabilityBins {
        bins,
        n: confidence.len(),
        ece: 0.0,
    };
    table.ece = table.recompute_ece();
    Ok(table)
}

/// ECE with confidence = row maximum and prediction = argmax.
pub fn ece(probs: &ProbMatrix, labels: &Labels, m: usize) -> Result<ReliabilityBins> {
    labels.check_aligned(probs.n_samples(), probs.n_classes())?;
    let correct: Vec<bool> = probs
        .predictions()
        .iter()
        .zip(labels.as_slice())
        .map(|(p, y)| p == y)
        .collect();
    ece_from_confidences(&probs.confidences(), &correct, m)
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_predictions(predictions: &[usize], labels: &Labels, n_classes: usize) -> Result<Self> {
        labels.check_aligned(predictions.len(), n_classes)?;
        Labels::new(predictions.to_vec()).check(n_classes)?;
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (&p, &y) in predictions.iter().zip(labels.as_slice()) {
            counts[y][p] += 1;
        }
        Ok(Self { n_classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.counts[c][c]).sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(UqError::Empty("confusion matrix")),
            n => Ok(self.trace() as f64 / n as f64),
        }
    }
}

pub fn confusion_matrix(probs: &ProbMatrix, labels: &Labels) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_predictions(&probs.predictions(), labels, probs.n_classes())
}

pub fn accuracy(probs: &ProbMatrix, labels: &Labels) -> Result<f64> {
    confusion_matrix(probs, labels)?.accuracy()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(rows: &[[f64; 2]]) -> ProbMatrix {
        ProbMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_bin_gap() {
        let p = rows(&[[0.8, 0.2]; 100]);
        let y: Vec<usize> = (0..100).map(|i| usize::from(i >= 75)).collect();
        let r = ece(&p, &Labels::new(y), 1).unwrap();
        assert!((r.ece - 0.05).abs() < 1e-12);
        assert_eq!(r.bins[0].count, 100);
    }

    #[test]
    fn sharp_correct_is_zero() {
        let p = rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        let r = ece(&p, &Labels::new(vec![0, 1, 0]), 15).unwrap();
        assert_eq!(r.ece, 0.0);
        assert_eq!(r.bins[14].count, 3);
    }

    #[test]
    fn bin_edges_right_closed() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.1, 10), 0);
        assert_eq!(bin_index(0.1000001, 10), 1);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.55, 1), 0);
        assert_eq!(bin_index(0.3, 10), 2);
        assert_eq!(bin_index(0.7, 10), 6);
    }

    #[test]
    fn ece_errors() {
        assert!(ece_from_confidences(&[], &[], 15).is_err());
        assert!(ece_from_confidences(&[0.5], &[true], 0).is_err());
    }

    #[test]
    fn table_recomputes_ece() {
        let conf: Vec<f64> = (0..200).map(|i| 0.5 + (i as f64 * 0.37).fract() * 0.5).collect();
        let ok: Vec<bool> = (0..200).map(|i| i % 3 != 0).collect();
        let r = ece_from_confidences(&conf, &ok, 15).unwrap();
        assert!((r.recompute_ece() - r.ece).abs() < 1e-12);
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 200);
        assert!((0.0..=1.0).contains(&r.ece));
    }

    #[test]
    fn confusion_and_accuracy() {
        let p = rows(&[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.7, 0.3]]);
        let y = Labels::new(vec![0, 1, 0, 0]);
        let cm = confusion_matrix(&p, &y).unwrap();
        assert_eq!(cm.counts, vec![vec![3, 0], vec![0, 1]]);
        assert_eq!(accuracy(&p, &y).unwrap(), 1.0);

        let y = Labels::new(vec![1, 1, 1, 1]);
        assert_eq!(accuracy(&p, &y).unwrap(), 0.25);
        assert_eq!(confusion_matrix(&p, &y).unwrap().total(), 4);
    }

    #[test]
    fn accuracy_matches_zero_one_loss() {
        let raw: Vec<[f64; 2]> = (0..97).map(|i| {
            let a = (i as f64 * 0.618).fract();
            [a, 1.0 - a]
        }).collect();
        let p = rows(&raw);
        let y = Labels::new((0..97).map(|i| (i * 7 % 5 == 0) as usize).collect());
        let mut loss = 0.0;
        for (i, r) in raw.iter().enumerate() {
            let pred = if r[1] > r[0] { 1 } else { 0 };
            loss += f64::from(u8::from(pred != y.as_slice()[i]));
        }
        let expected = 1.0 - loss / 97.0;
        assert!((accuracy(&p, &y).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn accuracy_empty_rejected() {
        let p = ProbMatrix::new(2, vec![]).unwrap();
        assert!(accuracy(&p, &Labels::new(vec![])).is_err());
    }
}
