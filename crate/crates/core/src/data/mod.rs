//! Tensor and label containers, dataset splitting, and file ingestion.
//!
//! [`ProbMatrix`] is the currency of the toolkit: every metric consumes an
//! N×C row-stochastic matrix. Monte-Carlo dropout produces a [`PassTensor`],
//! a T×N×C stack of such matrices. Containers validate on construction and
//! are immutable afterwards.

pub mod idx;
pub mod io;
pub mod split;

pub use split::{kfold_split, split_dataset, DatasetSplit};

use crate::error::{Result, UqError};

/// Maximum allowed deviation of a probability row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = c;
        }
    }
    best
}

fn validate_prob_row(row: &[f64], index: usize) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() {
            return Err(UqError::NonFinite { row: index });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(UqError::InvalidProbabilities(format!(
                "row {index}: entry {p} outside [0, 1]"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(UqError::InvalidProbabilities(format!(
            "row {index}: sums to {sum}"
        )));
    }
    Ok(())
}

/// Dense row-major matrix of 32-bit reals (network inputs, raw features).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(UqError::LengthMismatch {
                what: "matrix payload",
                expected: rows * cols,
                found: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }
}

/// N×C matrix of class probabilities; every row sums to 1 within
/// [`ROW_SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    n_samples: usize,
    n_classes: usize,
    values: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(n_classes: usize, values: Vec<f64>) -> Result<Self> {
        if n_classes < 2 {
            return Err(UqError::InvalidArgument(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if !values.len().is_multiple_of(n_classes) {
            return Err(UqError::InvalidProbabilities(format!(
                "{} values do not form rows of {n_classes}",
                values.len()
            )));
        }
        for (i, row) in values.chunks_exact(n_classes).enumerate() {
            validate_prob_row(row, i)?;
        }
        Ok(Self {
            n_samples: values.len() / n_classes,
            n_classes,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_classes = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_classes) {
            return Err(UqError::LengthMismatch {
                what: "probability row",
                expected: n_classes,
                found: rows[bad].len(),
            });
        }
        Self::new(n_classes, rows.concat())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_classes)
    }

    /// Argmax class per row, lowest index on ties.
    pub fn predictions(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }

    /// Largest probability per row.
    pub fn confidences(&self) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> ProbMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.n_classes);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        ProbMatrix {
            n_samples: idx.len(),
            n_classes: self.n_classes,
            values,
        }
    }
}

/// T×N×C stack of stochastic forward passes; every T-slice is a valid
/// [`ProbMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct PassTensor {
    n_passes: usize,
    n_samples: usize,
    n_classes: usize,
    values: Vec<f64>,
}

impl PassTensor {
    pub fn new(n_passes: usize, n_samples: usize, n_classes: usize, values: Vec<f64>) -> Result<Self> {
        if n_passes == 0 {
            return Err(UqError::InvalidArgument("pass tensor needs T >= 1".into()));
        }
        if n_classes < 2 {
            return Err(UqError::InvalidArgument(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        let expected = n_passes * n_samples * n_classes;
        if values.len() != expected {
            return Err(UqError::LengthMismatch {
                what: "pass tensor payload",
                expected,
                found: values.len(),
            });
        }
        for (i, row) in values.chunks_exact(n_classes).enumerate() {
            validate_prob_row(row, i % n_samples.max(1))?;
        }
        Ok(Self {
            n_passes,
            n_samples,
            n_classes,
            values,
        })
    }

    /// Stacks equally shaped probability matrices along a new pass axis.
    pub fn from_passes(passes: &[ProbMatrix]) -> Result<Self> {
        let first = passes.first().ok_or(UqError::Empty("pass list"))?;
        let (n, c) = (first.n_samples(), first.n_classes());
        let mut values = Vec::with_capacity(passes.len() * n * c);
        for p in passes {
            if p.n_samples() != n || p.n_classes() != c {
                return Err(UqError::LengthMismatch {
                    what: "pass slice",
                    expected: n * c,
                    found: p.n_samples() * p.n_classes(),
                });
            }
            values.extend_from_slice(p.values());
        }
        Ok(Self {
            n_passes: passes.len(),
            n_samples: n,
            n_classes: c,
            values,
        })
    }

    pub fn n_passes(&self) -> usize {
        self.n_passes
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Probabilities of sample `i` in pass `t`.
    pub fn probs(&self, t: usize, i: usize) -> &[f64] {
        let start = (t * self.n_samples + i) * self.n_classes;
        &self.values[start..start + self.n_classes]
    }

    pub fn pass(&self, t: usize) -> ProbMatrix {
        let stride = self.n_samples * self.n_classes;
        ProbMatrix {
            n_samples: self.n_samples,
            n_classes: self.n_classes,
            values: self.values[t * stride..(t + 1) * stride].to_vec(),
        }
    }

    /// Tensor restricted to the given samples (all passes kept).
    pub fn select_samples(&self, idx: &[usize]) -> PassTensor {
        let mut values = Vec::with_capacity(self.n_passes * idx.len() * self.n_classes);
        for t in 0..self.n_passes {
            for &i in idx {
                values.extend_from_slice(self.probs(t, i));
            }
        }
        PassTensor {
            n_passes: self.n_passes,
            n_samples: idx.len(),
            n_classes: self.n_classes,
            values,
        }
    }
}

/// Class indices, one per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels(Vec<usize>);

impl Labels {
    pub fn new(values: Vec<usize>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    /// Largest label plus one (0 for an empty set).
    pub fn n_classes_seen(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    /// Rejects any label `>= n_classes`.
    pub fn check(&self, n_classes: usize) -> Result<()> {
        match self.0.iter().find(|&&y| y >= n_classes) {
            Some(&label) => Err(UqError::LabelOutOfRange { label, n_classes }),
            None => Ok(()),
        }
    }

    /// Checks labels against `n_samples` rows of `n_classes` columns.
    pub fn check_aligned(&self, n_samples: usize, n_classes: usize) -> Result<()> {
        if self.0.len() != n_samples {
            return Err(UqError::LengthMismatch {
                what: "labels",
                expected: n_samples,
                found: self.0.len(),
            });
        }
        self.check(n_classes)
    }

    pub fn select(&self, idx: &[usize]) -> Labels {
        Labels(idx.iter().map(|&i| self.0[i]).collect())
    }
}

impl From<Vec<usize>> for Labels {
    fn from(v: Vec<usize>) -> Self {
        Labels(v)
    }
}

/// Flat vector of network parameters with a free-text origin tag.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f32>,
    source_tag: String,
}

impl WeightVector {
    pub fn new(values: Vec<f32>, source_tag: impl Into<String>) -> Result<Self> {
        if let Some(i) = values.iter().position(|w| !w.is_finite()) {
            return Err(UqError::NonFinite { row: i });
        }
        Ok(Self {
            values,
            source_tag: source_tag.into(),
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }
}

/// Row-wise softmax of an N×C logit array, stabilised by subtracting each
/// row's maximum before exponentiating.
pub fn softmax_rows(logits: &[f64], n_classes: usize) -> Result<ProbMatrix> {
    if n_classes == 0 || !logits.len().is_multiple_of(n_classes) {
        return Err(UqError::InvalidArgument(format!(
            "{} logits do not form rows of {n_classes}",
            logits.len()
        )));
    }
    let mut values = Vec::with_capacity(logits.len());
    for (i, row) in logits.chunks_exact(n_classes).enumerate() {
        if row.iter().any(|z| !z.is_finite()) {
            return Err(UqError::NonFinite { row: i });
        }
        softmax_into(row, &mut values);
    }
    ProbMatrix::new(n_classes, values)
}

pub(crate) fn softmax_into(row: &[f64], out: &mut Vec<f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = out.len();
    let mut sum = 0.0;
    for &z in row {
        let e = (z - max).exp();
        sum += e;
        out.push(e);
    }
    for p in &mut out[start..] {
        *p /= sum;
    }
}
