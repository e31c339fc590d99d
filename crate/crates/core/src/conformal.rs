//! Inductive (split) conformal prediction for classifiers.
//!
//! A model is fit once; a held-out calibration set supplies nonconformity
//! scores `s_i = 1 - p(y_i | x_i)`; the threshold `q_hat` is the `k`-th
//! smallest score with `k = ceil((n + 1)(1 - alpha))` clamped to `[1, n]`.
//! The prediction set of a new input holds every class whose score
//! `1 - p(c | x)` is at most `q_hat`. Under exchangeability the set contains
//! the true label with probability at least `1 - alpha`.
//!
//! ```
//! use uqkit::conformal::{calibration_quantile, nonconformity_scores, prediction_sets};
//! use uqkit::data::{Labels, ProbMatrix};
//!
//! let cal = ProbMatrix::from_rows(&[vec![0.9, 0.1], vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap();
//! let scores = nonconformity_scores(&cal, &Labels::new(vec![0, 0, 1])).unwrap();
//! let q = calibration_quantile(&scores, 0.25).unwrap();
//! assert_eq!(q.k, 3);
//! let test = ProbMatrix::from_rows(&[vec![0.7, 0.3]]).unwrap();
//! let sets = prediction_sets(&test, &q, true);
//! assert_eq!(sets.members(0), vec![0]);
//! ```

use serde::{Deserialize, Serialize};

use crate::data::{argmax, Labels, ProbMatrix};
use crate::error::{Result, UqError};

/// Calibration-set nonconformity scores, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonconformityScores {
    values: Vec<f64>,
}

impl NonconformityScores {
    /// Wraps precomputed scores; each must lie in `[0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(UqError::InvalidArgument(format!(
                "nonconformity score {bad} outside [0, 1]"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Calibrated threshold: `q_hat` is the `k`-th smallest of `n` scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileThreshold {
    pub q_hat: f64,
    pub alpha: f64,
    pub n: usize,
    pub k: usize,
}

impl QuantileThreshold {
    /// A threshold that is not derived from calibration data.
    pub fn fixed(q_hat: f64) -> Self {
        Self {
            q_hat,
            alpha: f64::NAN,
            n: 0,
            k: 0,
        }
    }
}

/// Score of class `c` given its probability. Both calibration and set
/// construction go through this so the comparison is exact.
#[inline]
fn score(p: f64) -> f64 {
    1.0 - p
}

/// `s_i = 1 - probs[i, labels[i]]`.
pub fn nonconformity_scores(probs: &ProbMatrix, labels: &Labels) -> Result<NonconformityScores> {
    labels.check_aligned(probs.n_samples(), probs.n_classes())?;
    let values = probs
        .rows()
        .zip(labels.as_slice())
        .map(|(row, &y)| score(row[y]).clamp(0.0, 1.0))
        .collect();
    Ok(NonconformityScores { values })
}

/// Order-statistic index `ceil((n + 1)(1 - alpha))`, clamped to `[1, n]`.
pub fn quantile_index(n: usize, alpha: f64) -> usize {
    // The epsilon absorbs products such as 100 * (1 - 0.1) = 90.00000000000001.
    let raw = ((n + 1) as f64 * (1.0 - alpha) - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

pub fn calibration_quantile(scores: &NonconformityScores, alpha: f64) -> Result<QuantileThreshold> {
    if scores.is_empty() {
        return Err(UqError::Empty("calibration scores"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(UqError::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let n = scores.len();
    let k = quantile_index(n, alpha);
    let mut buf = scores.values.clone();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(QuantileThreshold {
        q_hat: *kth,
        alpha,
        n,
        k,
    })
}

/// Per-sample label subsets stored as bitmasks over the classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSets {
    n_classes: usize,
    words: usize,
    bits: Vec<u64>,
    force_argmax: bool,
}

impl PredictionSets {
    /// Builds sets from explicit member lists.
    pub fn from_members(n_classes: usize, members: &[Vec<usize>], force_argmax: bool) -> Result<Self> {
        let mut sets = Self::empty(members.len(), n_classes, force_argmax);
        for (i, m) in members.iter().enumerate() {
            for &c in m {
                if c >= n_classes {
                    return Err(UqError::LabelOutOfRange { label: c, n_classes });
                }
                sets.insert(i, c);
            }
        }
        Ok(sets)
    }

    fn empty(n_samples: usize, n_classes: usize, force_argmax: bool) -> Self {
        let words = n_classes.div_ceil(64).max(1);
        Self {
            n_classes,
            words,
            bits: vec![0; n_samples * words],
            force_argmax,
        }
    }

    fn insert(&mut self, i: usize, c: usize) {
        self.bits[i * self.words + c / 64] |= 1 << (c % 64);
    }

    pub fn len(&self) -> usize {
        self.bits.len() / self.words
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn force_argmax(&self) -> bool {
        self.force_argmax
    }

    pub fn contains(&self, i: usize, c: usize) -> bool {
        c < self.n_classes && self.bits[i * self.words + c / 64] & (1 << (c % 64)) != 0
    }

    pub fn size(&self, i: usize) -> usize {
        self.bits[i * self.words..(i + 1) * self.words]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.size(i)).collect()
    }

    pub fn members(&self, i: usize) -> Vec<usize> {
        (0..self.n_classes).filter(|&c| self.contains(i, c)).collect()
    }
}

/// `set_i = { c : 1 - probs[i, c] <= q_hat }`, plus the argmax class when
/// `force_argmax` is set.
pub fn prediction_sets(probs: &ProbMatrix, q: &QuantileThreshold, force_argmax: bool) -> PredictionSets {
    let mut sets = PredictionSets::empty(probs.n_samples(), probs.n_classes(), force_argmax);
    for (i, row) in probs.rows().enumerate() {
        for (c, &p) in row.iter().enumerate() {
            if score(p) <= q.q_hat {
                sets.insert(i, c);
            }
        }
        if force_argmax {
            sets.insert(i, argmax(row));
        }
    }
    sets
}

/// Fraction of samples whose true label lies in its prediction set.
pub fn empirical_coverage(sets: &PredictionSets, labels: &Labels) -> Result<f64> {
    if sets.is_empty() {
        return Err(UqError::Empty("prediction sets"));
    }
    if labels.len() != sets.len() {
        return Err(UqError::LengthMismatch {
            what: "labels",
            expected: sets.len(),
            found: labels.len(),
        });
    }
    let hits = labels
        .as_slice()
        .iter()
        .enumerate()
        .filter(|&(i, &y)| sets.contains(i, y))
        .count();
    Ok(hits as f64 / sets.len() as f64)
}

/// Mean prediction-set size (efficiency).
pub fn mean_set_size(sets: &PredictionSets) -> Result<f64> {
    if sets.is_empty() {
        return Err(UqError::Empty("prediction sets"));
    }
    let total: usize = (0..sets.len()).map(|i| sets.size(i)).sum();
    Ok(total as f64 / sets.len() as f64)
}

/// Counts of prediction-set sizes, globally and per class.
///
/// `counts[s]` is the number of samples whose set has `s` members, for
/// `s in 0..=C`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSizeHistogram {
    pub global: Vec<usize>,
    pub per_class: Vec<Vec<usize>>,
}

/// Which label a per-class histogram row is keyed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKey {
    #[default]
    TrueLabel,
    Predicted,
}

/// Set-size histogram with per-class rows keyed by `keys` (true labels by
/// default, or argmax predictions).
pub fn set_size_histogram(sets: &PredictionSets, keys: &Labels) -> Result<SetSizeHistogram> {
    if keys.len() != sets.len() {
        return Err(UqError::LengthMismatch {
            what: "histogram keys",
            expected: sets.len(),
            found: keys.len(),
        });
    }
    let c = sets.n_classes();
    keys.check(c)?;
    let mut global = vec![0; c + 1];
    let mut per_class = vec![vec![0; c + 1]; c];
    for (i, &y) in keys.as_slice().iter().enumerate() {
        let s = sets.size(i);
        global[s] += 1;
        per_class[y][s] += 1;
    }
    Ok(SetSizeHistogram { global, per_class })
}

/// Equal-width histogram of scores over `[0, 1]`; bin `b` covers
/// `[b/n, (b+1)/n)` and the last bin is closed on the right.
pub fn score_histogram(scores: &NonconformityScores, n_bins: usize) -> Result<Vec<usize>> {
    if n_bins == 0 {
        return Err(UqError::InvalidArgument("score histogram needs >= 1 bin".into()));
    }
    let mut counts = vec![0; n_bins];
    for &s in scores.values() {
        let b = ((s * n_bins as f64).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pm(rows: &[&[f64]]) -> ProbMatrix {
        ProbMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn scores_examples() {
        let p = pm(&[&[0.7, 0.2, 0.1], &[1.0, 0.0, 0.0], &[0.7, 0.2, 0.1]]);
        let s = nonconformity_scores(&p, &Labels::new(vec![0, 0, 2])).unwrap();
        assert!((s.values()[0] - 0.3).abs() < 1e-12);
        assert_eq!(s.values()[1], 0.0);
        assert!((s.values()[2] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn scores_length_mismatch() {
        let p = pm(&[&[0.5, 0.5]]);
        assert!(matches!(
            nonconformity_scores(&p, &Labels::new(vec![0, 1])),
            Err(UqError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn quantile_examples() {
        let s = NonconformityScores::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = calibration_quantile(&s, 0.25).unwrap();
        assert_eq!((q.k, q.q_hat), (4, 0.4));

        let s = NonconformityScores::new(vec![0.5]).unwrap();
        let q = calibration_quantile(&s, 0.05).unwrap();
        assert_eq!((q.k, q.q_hat), (1, 0.5));

        let s = NonconformityScores::new((1..=99).map(|i| i as f64 / 100.0).collect()).unwrap();
        let q = calibration_quantile(&s, 0.1).unwrap();
        assert_eq!(q.k, 90);
        assert!((q.q_hat - 0.90).abs() < 1e-12);
    }

    #[test]
    fn quantile_errors() {
        let empty = NonconformityScores::new(vec![]).unwrap();
        assert!(matches!(calibration_quantile(&empty, 0.1), Err(UqError::Empty(_))));
        let s = NonconformityScores::new(vec![0.1]).unwrap();
        assert!(calibration_quantile(&s, 0.0).is_err());
        assert!(calibration_quantile(&s, 1.0).is_err());
    }

    #[test]
    fn sets_examples() {
        let q = QuantileThreshold::fixed(0.25);
        let s = prediction_sets(&pm(&[&[0.8, 0.15, 0.05]]), &q, false);
        assert_eq!(s.members(0), vec![0]);

        let s = prediction_sets(&pm(&[&[0.5, 0.4, 0.1]]), &q, true);
        assert_eq!(s.members(0), vec![0]);
        let strict = prediction_sets(&pm(&[&[0.5, 0.4, 0.1]]), &q, false);
        assert_eq!(strict.size(0), 0);

        let s = prediction_sets(&pm(&[&[0.5, 0.4, 0.1]]), &QuantileThreshold::fixed(1.0), false);
        assert_eq!(s.members(0), vec![0, 1, 2]);
    }

    #[test]
    fn coverage_and_size_examples() {
        let sets = PredictionSets::from_members(3, &[vec![0], vec![1], vec![0, 1]], true).unwrap();
        let cov = empirical_coverage(&sets, &Labels::new(vec![0, 2, 1])).unwrap();
        assert!((cov - 2.0 / 3.0).abs() < 1e-15);
        assert!((mean_set_size(&sets).unwrap() - 4.0 / 3.0).abs() < 1e-15);

        let full = PredictionSets::from_members(3, &[vec![0, 1, 2], vec![0, 1, 2]], false).unwrap();
        assert_eq!(empirical_coverage(&full, &Labels::new(vec![2, 1])).unwrap(), 1.0);

        let none = PredictionSets::from_members(3, &[], false).unwrap();
        assert!(empirical_coverage(&none, &Labels::new(vec![])).is_err());
        assert!(mean_set_size(&none).is_err());
    }

    #[test]
    fn many_classes_bitmask() {
        let sets = PredictionSets::from_members(130, &[vec![0, 64, 129]], false).unwrap();
        assert_eq!(sets.size(0), 3);
        assert!(sets.contains(0, 129) && !sets.contains(0, 128));
    }

    #[test]
    fn histogram_examples() {
        let sets = PredictionSets::from_members(2, &[vec![0], vec![0, 1]], true).unwrap();
        let h = set_size_histogram(&sets, &Labels::new(vec![0, 0])).unwrap();
        assert_eq!(h.per_class[0], vec![0, 1, 1]);
        assert_eq!(h.global.iter().sum::<usize>(), 2);
    }

    #[test]
    fn score_histogram_endpoints() {
        let s = NonconformityScores::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(score_histogram(&s, 2).unwrap(), vec![1, 1]);
        let s = NonconformityScores::new(vec![0.0; 7]).unwrap();
        assert_eq!(score_histogram(&s, 4).unwrap(), vec![7, 0, 0, 0]);
        assert!(score_histogram(&s, 0).is_err());
    }

    fn prob_rows(n: usize, c: usize) -> impl Strategy<Value = ProbMatrix> {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, c), n).prop_map(move |rows| {
            let rows: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|v| v / s).collect()
                })
                .collect();
            ProbMatrix::from_rows(&rows).unwrap()
        })
    }

    proptest! {
        #[test]
        fn sets_monotone_in_alpha(
            cal in prob_rows(40, 4),
            test in prob_rows(20, 4),
            ys in prop::collection::vec(0usize..4, 40),
            a1 in 0.01f64..0.5,
            a2 in 0.01f64..0.5,
            force in any::<bool>(),
        ) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let scores = nonconformity_scores(&cal, &Labels::new(ys)).unwrap();
            let q_lo = calibration_quantile(&scores, lo).unwrap();
            let q_hi = calibration_quantile(&scores, hi).unwrap();
            prop_assert!(q_lo.q_hat >= q_hi.q_hat);
            let s_lo = prediction_sets(&test, &q_lo, force);
            let s_hi = prediction_sets(&test, &q_hi, force);
            for i in 0..test.n_samples() {
                for c in 0..4 {
                    prop_assert!(!s_hi.contains(i, c) || s_lo.contains(i, c));
                }
            }
            if force {
                prop_assert!(mean_set_size(&s_hi).unwrap() >= 1.0);
            }
        }

        #[test]
        fn saturated_threshold_covers_everything(test in prob_rows(15, 3), ys in prop::collection::vec(0usize..3, 15)) {
            let sets = prediction_sets(&test, &QuantileThreshold::fixed(1.0), false);
            prop_assert_eq!(empirical_coverage(&sets, &Labels::new(ys)).unwrap(), 1.0);
        }

        #[test]
        fn score_histogram_conserves(scores in prop::collection::vec(0.0f64..=1.0, 0..200), bins in 1usize..30) {
            let s = NonconformityScores::new(scores.clone()).unwrap();
            prop_assert_eq!(score_histogram(&s, bins).unwrap().iter().sum::<usize>(), scores.len());
        }
    }
}
