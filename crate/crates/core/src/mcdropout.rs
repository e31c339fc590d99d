//! Uncertainty from stochastic forward passes.
//!
//! Given `T` dropout-on passes `p_t(y | x)`, the predictive distribution is
//! their mean. Its entropy (total uncertainty) splits into the mean per-pass
//! entropy (aleatoric proxy) plus the mutual information between prediction
//! and weights (epistemic proxy):
//!
//! ```text
//! H[mean_t p_t] = (1/T) sum_t H[p_t] + MI
//! ```
//!
//! All entropies are in nats; [`EntropyUnit::Bits`] rescales on output.

use serde::{Deserialize, Serialize};

use crate::data::{argmax, Labels, PassTensor, ProbMatrix};
use crate::error::{Result, UqError};

/// Probabilities below this are treated as zero inside entropy sums.
pub const ENTROPY_FLOOR: f64 = 1e-12;
/// Mutual information in `[-MI_SLACK, 0)` is clamped to zero; anything more
/// negative is an internal error.
pub const MI_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyUnit {
    #[default]
    Nats,
    Bits,
}

impl EntropyUnit {
    pub fn scale(self) -> f64 {
        match self {
            EntropyUnit::Nats => 1.0,
            EntropyUnit::Bits => std::f64::consts::LOG2_E,
        }
    }
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(row: &[f64]) -> f64 {
    let h: f64 = row
        .iter()
        .filter(|&&p| p >= ENTROPY_FLOOR)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

/// Mean of `values` as `v0 + mean(v - v0)`, which is exact when all values
/// are equal.
fn shifted_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut it = values;
    let Some(first) = it.next() else { return 0.0 };
    let (dev, n) = it.fold((0.0, 1usize), |(d, n), v| (d + (v - first), n + 1));
    first + dev / n as f64
}

fn mean_row(passes: &PassTensor, i: usize, out: &mut [f64]) {
    let t_count = passes.n_passes();
    for (k, o) in out.iter_mut().enumerate() {
        *o = shifted_mean((0..t_count).map(|t| passes.probs(t, i)[k]));
    }
}

/// Element-wise mean over the pass axis.
pub fn mean_prediction(passes: &PassTensor) -> ProbMatrix {
    let c = passes.n_classes();
    let mut values = vec![0.0; passes.n_samples() * c];
    for (i, out) in values.chunks_exact_mut(c).enumerate() {
        mean_row(passes, i, out);
    }
    ProbMatrix::new(c, values).expect("mean of stochastic rows is stochastic")
}

/// Entropy of each row of the mean predictive distribution.
pub fn predictive_entropy(mean_probs: &ProbMatrix) -> Vec<f64> {
    mean_probs.rows().map(entropy).collect()
}

/// Mean over passes of the per-pass entropy.
pub fn expected_entropy(passes: &PassTensor) -> Vec<f64> {
    (0..passes.n_samples())
        .map(|i| shifted_mean((0..passes.n_passes()).map(|t| entropy(passes.probs(t, i)))))
        .collect()
}

fn clamp_mi(mi: f64, sample: usize) -> Result<f64> {
    if mi >= 0.0 {
        Ok(mi)
    } else if mi >= -MI_SLACK {
        Ok(0.0)
    } else {
        Err(UqError::Consistency(format!(
            "mutual information {mi} < 0 for sample {sample}"
        )))
    }
}

/// `H[mean] - mean H`, per sample.
pub fn mutual_information(passes: &PassTensor) -> Result<Vec<f64>> {
    let h = predictive_entropy(&mean_prediction(passes));
    let e = expected_entropy(passes);
    h.iter()
        .zip(&e)
        .enumerate()
        .map(|(i, (h, e))| clamp_mi(h - e, i))
        .collect()
}

/// Population standard deviation (divide by `T`) of each class probability
/// across passes; N×C row-major.
pub fn classwise_std(passes: &PassTensor) -> Vec<f64> {
    let (n, c) = (passes.n_samples(), passes.n_classes());
    let t_count = passes.n_passes() as f64;
    let mut out = vec![0.0; n * c];
    let mut mean = vec![0.0; c];
    for i in 0..n {
        mean_row(passes, i, &mut mean);
        let dst = &mut out[i * c..(i + 1) * c];
        for t in 0..passes.n_passes() {
            for ((d, &p), &m) in dst.iter_mut().zip(passes.probs(t, i)).zip(&mean) {
                *d += (p - m) * (p - m);
            }
        }
        for d in dst.iter_mut() {
            *d = (*d / t_count).sqrt();
        }
    }
    out
}

/// One row of the uncertainty table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleUncertainty {
    pub prediction: usize,
    pub predictive_entropy: f64,
    pub expected_entropy: f64,
    pub mutual_information: f64,
    pub max_confidence: f64,
    pub confidence_std: f64,
}

/// Per-sample uncertainty decomposition, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyTable {
    pub records: Vec<SampleUncertainty>,
    pub n_passes: usize,
    pub n_classes: usize,
}

impl UncertaintyTable {
    pub fn from_passes(passes: &PassTensor) -> Result<Self> {
        let mean = mean_prediction(passes);
        let h = predictive_entropy(&mean);
        let e = expected_entropy(passes);
        let std = classwise_std(passes);
        let c = passes.n_classes();
        let records = (0..passes.n_samples())
            .map(|i| {
                let row = mean.row(i);
                let pred = argmax(row);
                Ok(SampleUncertainty {
                    prediction: pred,
                    predictive_entropy: h[i],
                    expected_entropy: e[i],
                    mutual_information: clamp_mi(h[i] - e[i], i)?,
                    max_confidence: row[pred],
                    confidence_std: std[i * c + pred],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            records,
            n_passes: passes.n_passes(),
            n_classes: c,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.prediction).collect()
    }

    pub fn predictive_entropies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.predictive_entropy).collect()
    }

    /// Copy with all entropy columns expressed in `unit`.
    pub fn in_unit(&self, unit: EntropyUnit) -> Self {
        let s = unit.scale();
        let mut out = self.clone();
        for r in &mut out.records {
            r.predictive_entropy *= s;
            r.expected_entropy *= s;
            r.mutual_information *= s;
        }
        out
    }
}

/// Mean entropy of correct and incorrect predictions within one class.
/// Empty groups are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntropy {
    pub class: usize,
    pub count_correct: usize,
    pub count_incorrect: usize,
    pub mean_entropy_correct: Option<f64>,
    pub mean_entropy_incorrect: Option<f64>,
    /// Mean over the class's samples of the per-class probability std
    /// vector; filled by [`ClassUncertaintySummary::with_classwise_std`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_std: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassUncertaintySummary {
    pub key: crate::conformal::ClassKey,
    pub classes: Vec<ClassEntropy>,
}

impl ClassUncertaintySummary {
    /// Attaches the mean classwise std (N×C, from [`classwise_std`]) of each
    /// group's samples.
    pub fn with_classwise_std(mut self, std: &[f64], keys: &[usize]) -> Self {
        let c = self.classes.len();
        let mut sums = vec![vec![0.0; c]; c];
        let mut counts = vec![0usize; c];
        for (i, &k) in keys.iter().enumerate() {
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(&std[i * c..(i + 1) * c]) {
                *s += v;
            }
        }
        for (k, entry) in self.classes.iter_mut().enumerate() {
            entry.per_class_std = (counts[k] > 0)
                .then(|| sums[k].iter().map(|s| s / counts[k] as f64).collect());
        }
        self
    }
}

fn mean_opt(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Groups samples by class (true label by default) and splits each group by
/// whether the argmax prediction was correct.
pub fn entropy_by_correctness(
    entropy: &[f64],
    mean_probs: &ProbMatrix,
    labels: &Labels,
    key: crate::conformal::ClassKey,
) -> Result<ClassUncertaintySummary> {
    entropy_by_correctness_from_predictions(entropy, &mean_probs.predictions(), labels, mean_probs.n_classes(), key)
}

/// [`entropy_by_correctness`] for callers that hold predictions rather than
/// probabilities.
pub fn entropy_by_correctness_from_predictions(
    entropy: &[f64],
    predictions: &[usize],
    labels: &Labels,
    n_classes: usize,
    key: crate::conformal::ClassKey,
) -> Result<ClassUncertaintySummary> {
    use crate::conformal::ClassKey;
    let c = n_classes;
    labels.check_aligned(predictions.len(), c)?;
    Labels::new(predictions.to_vec()).check(c)?;
    if entropy.len() != labels.len() {
        return Err(UqError::LengthMismatch {
            what: "entropy",
            expected: labels.len(),
            found: entropy.len(),
        });
    }
    let mut acc = vec![(0.0, 0usize, 0.0, 0usize); c];
    for ((&h, &y), &p) in entropy.iter().zip(labels.as_slice()).zip(predictions) {
        let k = match key {
            ClassKey::TrueLabel => y,
            ClassKey::Predicted => p,
        };
        let a = &mut acc[k];
        if p == y {
            a.0 += h;
            a.1 += 1;
        } else {
            a.2 += h;
            a.3 += 1;
        }
    }
    let classes = acc
        .into_iter()
        .enumerate()
        .map(|(class, (sc, nc, si, ni))| ClassEntropy {
            class,
            count_correct: nc,
            count_incorrect: ni,
            mean_entropy_correct: mean_opt(sc, nc),
            mean_entropy_incorrect: mean_opt(si, ni),
            per_class_std: None,
        })
        .collect();
    Ok(ClassUncertaintySummary { key, classes })
}

/// Confidence of one sample's predicted class across passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePoint {
    pub sample: usize,
    pub class: usize,
    pub mean: f64,
    pub std: f64,
}

/// For each sample, mean and std (over passes) of the probability of its
/// mean-argmax class, sorted by ascending mean.
pub fn confidence_profile(passes: &PassTensor) -> Vec<ConfidencePoint> {
    let mean = mean_prediction(passes);
    let std = classwise_std(passes);
    let c = passes.n_classes();
    let mut points: Vec<ConfidencePoint> = mean
        .rows()
        .enumerate()
        .map(|(i, row)| {
            let class = argmax(row);
            ConfidencePoint {
                sample: i,
                class,
                mean: row[class],
                std: std[i * c + class],
            }
        })
        .collect();
    points.sort_by(|a, b| a.mean.total_cmp(&b.mean).then(a.sample.cmp(&b.sample)));
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub count: usize,
}

/// Quantile of sorted data by linear interpolation between closest ranks
/// (position `(n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl FiveNumber {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
            count: v.len(),
        })
    }
}

/// Five-number summary of entropy per class; classes without samples are
/// `None`.
pub fn classwise_entropy_distribution(
    entropy: &[f64],
    labels: &Labels,
    n_classes: usize,
) -> Result<Vec<Option<FiveNumber>>> {
    labels.check_aligned(entropy.len(), n_classes)?;
    let mut groups = vec![Vec::new(); n_classes];
    for (&h, &y) in entropy.iter().zip(labels.as_slice()) {
        groups[y].push(h);
    }
    Ok(groups.iter().map(|g| FiveNumber::from_values(g)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::ClassKey;
    use proptest::prelude::*;

    fn tensor(slices: &[&[&[f64]]]) -> PassTensor {
        let passes: Vec<ProbMatrix> = slices
            .iter()
            .map(|rows| ProbMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap())
            .collect();
        PassTensor::from_passes(&passes).unwrap()
    }

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn identical_passes_give_exact_zero_mi() {
        let row: &[f64] = &[0.1, 0.2, 0.7];
        let t = tensor(&[&[row], &[row], &[row]]);
        assert_eq!(mean_prediction(&t).row(0), row);
        assert_eq!(mutual_information(&t).unwrap(), vec![0.0]);
    }

    #[test]
    fn mean_prediction_examples() {
        let t = tensor(&[&[&[1.0, 0.0]], &[&[0.0, 1.0]]]);
        assert_eq!(mean_prediction(&t).row(0), &[0.5, 0.5]);
        let single = tensor(&[&[&[0.3, 0.7], &[0.9, 0.1]]]);
        assert_eq!(mean_prediction(&single), single.pass(0));
        let same = tensor(&[&[&[0.3, 0.7]], &[&[0.3, 0.7]], &[&[0.3, 0.7]]]);
        assert!((mean_prediction(&same).row(0)[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[0.1; 10]) - 10f64.ln()).abs() < 1e-12);
        assert!((entropy(&[0.5, 0.5]) - LN2).abs() < 1e-15);
        assert!((entropy(&[0.5, 0.5]) - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn expected_entropy_examples() {
        let onehot = tensor(&[&[&[1.0, 0.0]], &[&[0.0, 1.0]]]);
        assert_eq!(expected_entropy(&onehot), vec![0.0]);
        let uniform = tensor(&[&[&[0.25; 4]], &[&[0.25; 4]]]);
        assert!((expected_entropy(&uniform)[0] - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_examples() {
        let disagree = tensor(&[&[&[1.0, 0.0]], &[&[0.0, 1.0]]]);
        assert!((mutual_information(&disagree).unwrap()[0] - LN2).abs() < 1e-15);
        let same = tensor(&[&[&[0.2, 0.8]], &[&[0.2, 0.8]]]);
        assert_eq!(mutual_information(&same).unwrap(), vec![0.0]);
        let single = tensor(&[&[&[0.2, 0.8], &[0.6, 0.4]]]);
        assert_eq!(mutual_information(&single).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn classwise_std_examples() {
        let t = tensor(&[&[&[1.0, 0.0]], &[&[0.0, 1.0]]]);
        assert_eq!(classwise_std(&t), vec![0.5, 0.5]);
        let same = tensor(&[&[&[0.2, 0.8]], &[&[0.2, 0.8]]]);
        assert_eq!(classwise_std(&same), vec![0.0, 0.0]);
        let single = tensor(&[&[&[0.2, 0.8]]]);
        assert_eq!(classwise_std(&single), vec![0.0, 0.0]);
    }

    #[test]
    fn correctness_grouping() {
        let mean = ProbMatrix::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let s = entropy_by_correctness(&[0.1, 0.9], &mean, &Labels::new(vec![0, 0]), ClassKey::TrueLabel).unwrap();
        let c0 = &s.classes[0];
        assert_eq!(c0.mean_entropy_correct, Some(0.1));
        assert_eq!(c0.mean_entropy_incorrect, Some(0.9));
        assert_eq!(c0.count_correct + c0.count_incorrect, 2);
        assert_eq!(s.classes[1].count_correct + s.classes[1].count_incorrect, 0);

        let by_pred = entropy_by_correctness(&[0.1, 0.9], &mean, &Labels::new(vec![0, 0]), ClassKey::Predicted).unwrap();
        assert_eq!(by_pred.classes[1].mean_entropy_incorrect, Some(0.9));
    }

    #[test]
    fn all_correct_has_no_incorrect_groups() {
        let mean = ProbMatrix::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let s = entropy_by_correctness(&[0.2, 0.4], &mean, &Labels::new(vec![0, 1]), ClassKey::TrueLabel).unwrap();
        assert!(s.classes.iter().all(|c| c.mean_entropy_incorrect.is_none()));
    }

    #[test]
    fn confidence_profile_sorted() {
        let t = tensor(&[&[&[0.9, 0.1], &[0.4, 0.6]], &[&[0.9, 0.1], &[0.4, 0.6]]]);
        let prof = confidence_profile(&t);
        assert_eq!(prof.len(), 2);
        assert!((prof[0].mean - 0.6).abs() < 1e-12 && prof[0].class == 1);
        assert!((prof[1].mean - 0.9).abs() < 1e-12);
        assert!(prof.iter().all(|p| p.std == 0.0));
    }

    #[test]
    fn five_number_examples() {
        let f = FiveNumber::from_values(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(f.median, 2.0);
        let f = FiveNumber::from_values(&[0.7]).unwrap();
        assert!([f.min, f.q1, f.median, f.q3, f.max].iter().all(|&v| v == 0.7));
        let f = FiveNumber::from_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((f.q1, f.q3), (1.75, 3.25));
        let d = classwise_entropy_distribution(&[1.0, 2.0], &Labels::new(vec![0, 0]), 3).unwrap();
        assert!(d[0].is_some() && d[1].is_none() && d[2].is_none());
    }

    #[test]
    fn bits_rescale() {
        let t = tensor(&[&[&[1.0, 0.0]], &[&[0.0, 1.0]]]);
        let table = UncertaintyTable::from_passes(&t).unwrap().in_unit(EntropyUnit::Bits);
        assert!((table.records[0].predictive_entropy - 1.0).abs() < 1e-12);
        assert!((table.records[0].mutual_information - 1.0).abs() < 1e-12);
    }

    fn random_tensor() -> impl Strategy<Value = PassTensor> {
        (1usize..6, 1usize..5, 2usize..6).prop_flat_map(|(t, n, c)| {
            prop::collection::vec(0.0f64..1.0, t * n * c).prop_map(move |raw| {
                let values: Vec<f64> = raw
                    .chunks(c)
                    .flat_map(|r| {
                        let s: f64 = r.iter().sum::<f64>() + 1e-9;
                        r.iter().map(|v| (v + 1e-9 / c as f64) / s).collect::<Vec<_>>()
                    })
                    .collect();
                PassTensor::new(t, n, c, values).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn decomposition_identity_and_bounds(t in random_tensor()) {
            let h = predictive_entropy(&mean_prediction(&t));
            let e = expected_entropy(&t);
            let mi = mutual_information(&t).unwrap();
            let lnc = (t.n_classes() as f64).ln();
            for i in 0..t.n_samples() {
                prop_assert!((mi[i] - (h[i] - e[i])).abs() <= 1e-10);
                prop_assert!(e[i] >= -1e-12 && e[i] <= h[i] + 1e-12 && h[i] <= lnc + 1e-12);
            }
        }

        #[test]
        fn pass_permutation_and_duplication_invariant(t in random_tensor()) {
            let passes: Vec<ProbMatrix> = (0..t.n_passes()).map(|k| t.pass(k)).collect();
            let reversed: Vec<ProbMatrix> = passes.iter().rev().cloned().collect();
            let doubled: Vec<ProbMatrix> = passes.iter().chain(&passes).cloned().collect();
            let base = UncertaintyTable::from_passes(&t).unwrap();
            for other in [reversed, doubled] {
                let o = UncertaintyTable::from_passes(&PassTensor::from_passes(&other).unwrap()).unwrap();
                for (a, b) in base.records.iter().zip(&o.records) {
                    prop_assert_eq!(a.prediction, b.prediction);
                    prop_assert!((a.predictive_entropy - b.predictive_entropy).abs() < 1e-12);
                    prop_assert!((a.expected_entropy - b.expected_entropy).abs() < 1e-12);
                    prop_assert!((a.mutual_information - b.mutual_information).abs() < 1e-12);
                    prop_assert!((a.confidence_std - b.confidence_std).abs() < 1e-12);
                }
            }
        }
    }
}
