//! End-to-end run: data, split, train, MC passes, calibrate, evaluate.
//!
//! Conformal sets are built from the deterministic (dropout-off) softmax;
//! entropy, ECE and the confusion matrix use the MC mean prediction.

use serde::{Deserialize, Serialize};

use crate::calibration::{self, ConfusionMatrix, ReliabilityBins};
use crate::compare::{self, JointRecord};
use crate::conformal::{self, PredictionSets, QuantileThreshold};
use crate::data::split::split_by_counts;
use crate::data::{DatasetSplit, Labels, Matrix, PassTensor, ProbMatrix};
use crate::error::Result;
use crate::mcdropout::{self, UncertaintyTable};
use crate::mininet::{MiniNet, TrainConfig, TrainHistory, DEFAULT_DROPOUT, DEFAULT_PASSES};
use crate::sparsity::{self, SparsityProfile, DEFAULT_BOUNDARIES};
use crate::synthetic::{blobs, BlobSpec};

/// Which synthetic population to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlobKind {
    Separable,
    Overlapping,
}

impl BlobKind {
    pub fn spec(self, n_samples: usize) -> BlobSpec {
        match self {
            BlobKind::Separable => BlobSpec::separable(n_samples),
            BlobKind::Overlapping => BlobSpec::overlapping(n_samples),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub blobs: BlobKind,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    /// One seed drives data, split, init, shuffling and dropout through
    /// independent substreams.
    pub seed: u64,
    pub alpha: f64,
    pub passes: usize,
    pub bins: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub force_argmax: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            blobs: BlobKind::Overlapping,
            n_train: 3000,
            n_cal: 500,
            n_test: 2000,
            seed: 0,
            alpha: 0.05,
            passes: DEFAULT_PASSES,
            bins: calibration::DEFAULT_BINS,
            hidden: vec![32, 16],
            dropout: DEFAULT_DROPOUT,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            force_argmax: true,
        }
    }
}

impl PipelineConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }
}

/// Every intermediate and final artifact of one run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub config: PipelineConfig,
    pub split: DatasetSplit,
    pub net: MiniNet,
    pub history: TrainHistory,
    pub cal_features: Matrix,
    pub cal_labels: Labels,
    pub test_features: Matrix,
    pub test_labels: Labels,
    pub cal_probs: ProbMatrix,
    pub test_probs: ProbMatrix,
    pub passes: PassTensor,
    pub mean_probs: ProbMatrix,
    pub threshold: QuantileThreshold,
    pub sets: PredictionSets,
    pub coverage: f64,
    pub mean_set_size: f64,
    pub table: UncertaintyTable,
    pub joint: Vec<JointRecord>,
    pub spearman_rho: Option<f64>,
    pub reliability: ReliabilityBins,
    pub confusion: ConfusionMatrix,
    pub sparsity: SparsityProfile,
}

impl PipelineRun {
    /// Mean predictive entropy of (correct, misclassified) test samples;
    /// `None` for an empty group.
    pub fn entropy_correct_vs_incorrect(&self) -> (Option<f64>, Option<f64>) {
        let mut acc = [(0.0, 0usize); 2];
        for r in &self.joint {
            let a = &mut acc[usize::from(!r.correct)];
            a.0 += r.predictive_entropy;
            a.1 += 1;
        }
        let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
        (mean(acc[0]), mean(acc[1]))
    }
}

/// Generates the configured blobs and runs the pipeline on them.
pub fn run(config: &PipelineConfig) -> Result<PipelineRun> {
    let n = config.n_train + config.n_cal + config.n_test;
    let (features, labels) = blobs(&config.blobs.spec(n), config.seed);
    run_on(&features, &labels, config)
}

/// Runs the pipeline on caller-supplied data; `n_train` is ignored and the
/// remainder after calibration and test goes to training.
pub fn run_on(features: &Matrix, labels: &Labels, config: &PipelineConfig) -> Result<PipelineRun> {
    let n_classes = labels.n_classes_seen();
    labels.check_aligned(features.rows(), n_classes)?;
    let split = split_by_counts(features.rows(), config.n_cal, config.n_test, config.seed)?;

    let mut dims = vec![features.cols()];
    dims.extend(&config.hidden);
    dims.push(n_classes);
    let mut net = MiniNet::init(&dims, config.dropout, config.seed)?;
    let history = net.train(
        &features.select_rows(&split.train_idx),
        &labels.select(&split.train_idx),
        &config.train_config(),
    )?;

    let cal_features = features.select_rows(&split.cal_idx);
    let cal_labels = labels.select(&split.cal_idx);
    let test_features = features.select_rows(&split.test_idx);
    let test_labels = labels.select(&split.test_idx);

    let cal_probs = net.predict(&cal_features)?;
    let test_probs = net.predict(&test_features)?;
    let scores = conformal::nonconformity_scores(&cal_probs, &cal_labels)?;
    let threshold = conformal::calibration_quantile(&scores, config.alpha)?;
    let sets = conformal::prediction_sets(&test_probs, &threshold, config.force_argmax);
    let coverage = conformal::empirical_coverage(&sets, &test_labels)?;
    let mean_set_size = conformal::mean_set_size(&sets)?;

    let passes = net.mc_forward(&test_features, config.passes, config.seed)?;
    let mean_probs = mcdropout::mean_prediction(&passes);
    let table = UncertaintyTable::from_passes(&passes)?;
    let joint = compare::join(&sets, &table, &test_labels)?;
    let sizes: Vec<f64> = joint.iter().map(|r| r.set_size as f64).collect();
    let spearman_rho = compare::spearman_rho(&sizes, &table.predictive_entropies())?;

    let reliability = calibration::ece(&mean_probs, &test_labels, config.bins)?;
    let confusion = calibration::confusion_matrix(&mean_probs, &test_labels)?;
    let sparsity = sparsity::sparsity_profile(&net.export_weights(), &DEFAULT_BOUNDARIES)?;

    Ok(PipelineRun {
        config: config.clone(),
        split,
        net,
        history,
        cal_features,
        cal_labels,
        test_features,
        test_labels,
        cal_probs,
        test_probs,
        passes,
        mean_probs,
        threshold,
        sets,
        coverage,
        mean_set_size,
        table,
        joint,
        spearman_rho,
        reliability,
        confusion,
        sparsity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PipelineConfig {
        PipelineConfig {
            n_train: 600,
            n_cal: 200,
            n_test: 300,
            passes: 8,
            epochs: 5,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn shapes_and_ranges() {
        let run = run(&small().with_seed(3)).unwrap();
        assert_eq!(run.split.train_idx.len(), 600);
        assert_eq!(run.passes.n_passes(), 8);
        assert_eq!(run.passes.n_samples(), 300);
        assert_eq!(run.joint.len(), 300);
        assert_eq!(run.threshold.n, 200);
        assert!((0.0..=1.0).contains(&run.coverage));
        assert!((1.0..=3.0).contains(&run.mean_set_size));
        assert_eq!(run.confusion.total(), 300);
        assert_eq!(run.sparsity.total, run.net.n_parameters());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = run(&small().with_seed(9)).unwrap();
        let b = run(&small().with_seed(9)).unwrap();
        assert_eq!(a.passes, b.passes);
        assert_eq!(a.joint, b.joint);
        assert_eq!(a.threshold, b.threshold);
        let c = run(&small().with_seed(10)).unwrap();
        assert_ne!(a.passes, c.passes);
    }

    #[test]
    fn larger_alpha_gives_smaller_sets() {
        let tight = run(&small().with_seed(1)).unwrap();
        let loose = run(&PipelineConfig { alpha: 0.5, ..small() }.with_seed(1)).unwrap();
        assert!(loose.mean_set_size < tight.mean_set_size);
    }
}
