//! JSON reports and plot-data CSVs.
//!
//! Everything here is a pure function of its inputs (no timestamps, no
//! host paths beyond what the caller passes in), so reruns with the same
//! seeds produce byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{self, ConfusionMatrix, ReliabilityBins};
use crate::compare::{self, JointRecord, SetSizeGroup};
use crate::conformal::{self, ClassKey, PredictionSets, QuantileThreshold, SetSizeHistogram};
use crate::data::io::write_atomic;
use crate::data::Labels;
use crate::error::{Result, UqError};
use crate::mcdropout::{
    self, ClassEntropy, ConfidencePoint, EntropyUnit, FiveNumber, SampleUncertainty, UncertaintyTable,
};
use crate::pipeline::PipelineRun;
use crate::sparsity::SparsityProfile;

/// Bins of the nonconformity-score histogram.
pub const SCORE_BINS: usize = 20;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance of a report: what ran, on what, with which knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub seeds: Vec<u64>,
    pub alpha: Option<f64>,
    pub passes: Option<usize>,
    pub bins: Option<usize>,
    pub out_dir: String,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            seeds: Vec::new(),
            alpha: None,
            passes: None,
            bins: None,
            out_dir: out_dir.display().to_string(),
            version: VERSION.to_string(),
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub key: ClassKey,
    /// `global[s]`: number of test samples whose set has `s` members.
    pub global: Vec<usize>,
    pub per_class: Vec<Vec<usize>>,
    pub scores: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalReport {
    pub alpha: f64,
    pub n_cal: usize,
    pub k: usize,
    pub q_hat: f64,
    pub force_argmax: bool,
    pub coverage: f64,
    pub mean_set_size: f64,
    pub histogram: HistogramReport,
}

impl ConformalReport {
    pub fn new(
        threshold: &QuantileThreshold,
        sets: &PredictionSets,
        coverage: f64,
        mean_set_size: f64,
        key: ClassKey,
        sizes: &SetSizeHistogram,
        scores: Vec<usize>,
    ) -> Self {
        Self {
            alpha: threshold.alpha,
            n_cal: threshold.n,
            k: threshold.k,
            q_hat: threshold.q_hat,
            force_argmax: sets.force_argmax(),
            coverage,
            mean_set_size,
            histogram: HistogramReport {
                key,
                global: sizes.global.clone(),
                per_class: sizes.per_class.clone(),
                scores,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub n_samples: usize,
    /// Unknown when the table was read back from CSV.
    pub n_passes: Option<usize>,
    pub unit: String,
    pub mean_predictive_entropy: f64,
    pub mean_expected_entropy: f64,
    pub mean_mutual_information: f64,
    pub mean_entropy_correct: Option<f64>,
    pub mean_entropy_incorrect: Option<f64>,
    pub key: ClassKey,
    pub classes: Vec<ClassEntropy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub bins: usize,
    pub ece: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub n_samples: usize,
    pub spearman_rho: Option<f64>,
    pub by_set_size: Vec<SetSizeGroup>,
}

/// Mini-net hyperparameters; these are toolkit defaults, not values taken
/// from any published model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub layer_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hyperparameter_origin: String,
    pub final_train_loss: Option<f64>,
}

/// Combined comparison report written by the `report` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub manifest: RunManifest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conformal: Option<ConformalReport>,
    pub uncertainty: UncertaintySummary,
    pub comparison: ComparisonSummary,
    pub calibration: CalibrationSummary,
    pub confusion_matrix: ConfusionMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<SparsityProfile>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 { 0.0 } else { sum / n as f64 }
}

/// Aggregates an uncertainty table against labels.
pub fn uncertainty_summary(
    records: &[SampleUncertainty],
    n_passes: Option<usize>,
    n_classes: usize,
    labels: &Labels,
    key: ClassKey,
    unit: EntropyUnit,
) -> Result<UncertaintySummary> {
    let entropy: Vec<f64> = records.iter().map(|r| r.predictive_entropy).collect();
    let preds: Vec<usize> = records.iter().map(|r| r.prediction).collect();
    let by_class =
        mcdropout::entropy_by_correctness_from_predictions(&entropy, &preds, labels, n_classes, key)?;
    let split = |correct: bool| {
        let group: Vec<f64> = records
            .iter()
            .zip(labels.as_slice())
            .filter(|(r, &y)| (r.prediction == y) == correct)
            .map(|(r, _)| r.predictive_entropy)
            .collect();
        (!group.is_empty()).then(|| mean(group.into_iter()))
    };
    Ok(UncertaintySummary {
        n_samples: records.len(),
        n_passes,
        unit: match unit {
            EntropyUnit::Nats => "nats",
            EntropyUnit::Bits => "bits",
        }
        .to_string(),
        mean_predictive_entropy: mean(records.iter().map(|r| r.predictive_entropy)),
        mean_expected_entropy: mean(records.iter().map(|r| r.expected_entropy)),
        mean_mutual_information: mean(records.iter().map(|r| r.mutual_information)),
        mean_entropy_correct: split(true),
        mean_entropy_incorrect: split(false),
        key,
        classes: by_class.classes,
    })
}

pub fn comparison_summary(joint: &[JointRecord]) -> Result<ComparisonSummary> {
    let sizes: Vec<f64> = joint.iter().map(|r| r.set_size as f64).collect();
    let entropy: Vec<f64> = joint.iter().map(|r| r.predictive_entropy).collect();
    let spearman_rho = if joint.len() >= 2 { compare::spearman_rho(&sizes, &entropy)? } else { None };
    Ok(ComparisonSummary {
        n_samples: joint.len(),
        spearman_rho,
        by_set_size: compare::entropy_by_setsize(joint)?,
    })
}

/// Reliability table and confusion matrix from per-sample predictions and
/// confidences.
pub fn calibration_from_records(
    records: &[SampleUncertainty],
    labels: &Labels,
    n_classes: usize,
    bins: usize,
) -> Result<(ReliabilityBins, ConfusionMatrix)> {
    let preds: Vec<usize> = records.iter().map(|r| r.prediction).collect();
    let confusion = ConfusionMatrix::from_predictions(&preds, labels, n_classes)?;
    let conf: Vec<f64> = records.iter().map(|r| r.max_confidence).collect();
    let correct: Vec<bool> = preds.iter().zip(labels.as_slice()).map(|(p, y)| p == y).collect();
    Ok((calibration::ece_from_confidences(&conf, &correct, bins)?, confusion))
}

/// Builds the combined report of a pipeline run.
pub fn pipeline_report(run: &PipelineRun, manifest: RunManifest) -> Result<Report> {
    let c = run.net.n_classes();
    let scores = conformal::nonconformity_scores(&run.cal_probs, &run.cal_labels)?;
    let sizes = conformal::set_size_histogram(&run.sets, &run.test_labels)?;
    let conformal = ConformalReport::new(
        &run.threshold,
        &run.sets,
        run.coverage,
        run.mean_set_size,
        ClassKey::TrueLabel,
        &sizes,
        conformal::score_histogram(&scores, SCORE_BINS)?,
    );
    let cfg = &run.config;
    Ok(Report {
        manifest,
        model: Some(ModelSummary {
            layer_dims: run.net.layer_dims().to_vec(),
            dropout_rate: run.net.dropout_rate(),
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            hyperparameter_origin: "uqkit defaults".to_string(),
            final_train_loss: run.history.loss.last().copied(),
        }),
        conformal: Some(conformal),
        uncertainty: uncertainty_summary(
            &run.table.records,
            Some(run.table.n_passes),
            c,
            &run.test_labels,
            ClassKey::TrueLabel,
            EntropyUnit::Nats,
        )?,
        comparison: comparison_summary(&run.joint)?,
        calibration: CalibrationSummary {
            bins: run.reliability.bins.len(),
            ece: run.reliability.ece,
            accuracy: run.confusion.accuracy()?,
        },
        confusion_matrix: run.confusion.clone(),
        sparsity: Some(run.sparsity.clone()),
    })
}

/// Writes `report.json` and every plot-data CSV of a pipeline run into
/// `out_dir`; returns the report.
pub fn write_pipeline_artifacts(run: &PipelineRun, out_dir: &Path, manifest: RunManifest) -> Result<Report> {
    let report = pipeline_report(run, manifest)?;
    let labels = run.test_labels.as_slice();
    let c = run.net.n_classes();
    let entropy = run.table.predictive_entropies();
    let dist = mcdropout::classwise_entropy_distribution(&entropy, &run.test_labels, c)?;
    let scores = conformal::nonconformity_scores(&run.cal_probs, &run.cal_labels)?;
    let files: Vec<(&str, String)> = vec![
        ("history.csv", run.history.to_csv()),
        ("prediction_sets.csv", prediction_sets_csv(&run.sets)),
        ("set_size_histogram.csv", set_size_histogram_csv(&conformal::set_size_histogram(&run.sets, &run.test_labels)?)),
        ("score_histogram.csv", score_histogram_csv(&conformal::score_histogram(&scores, SCORE_BINS)?)),
        ("uncertainty.csv", uncertainty_csv(&run.table, Some(labels))),
        ("entropy_by_class.csv", entropy_by_class_csv(&report.uncertainty.classes)),
        ("entropy_distribution.csv", entropy_distribution_csv(&dist)),
        ("confidence_profile.csv", confidence_profile_csv(&mcdropout::confidence_profile(&run.passes))),
        ("joint.csv", joint_csv(&run.joint)),
        ("entropy_by_setsize.csv", setsize_groups_csv(&report.comparison.by_set_size)),
        ("reliability.csv", reliability_csv(&run.reliability)),
        ("confusion.csv", confusion_csv(&run.confusion)),
        ("sparsity.csv", run.sparsity.to_csv()),
    ];
    for (name, text) in files {
        write_text(&out_dir.join(name), &text)?;
    }
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `sample,prediction,label,predictive_entropy,expected_entropy,mutual_information,max_confidence,confidence_std`;
/// the label column is empty when labels are unknown.
pub fn uncertainty_csv(table: &UncertaintyTable, labels: Option<&[usize]>) -> String {
    let mut s = String::from(
        "sample,prediction,label,predictive_entropy,expected_entropy,mutual_information,max_confidence,confidence_std\n",
    );
    for (i, r) in table.records.iter().enumerate() {
        let label = labels.map(|l| l[i].to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{i},{},{label},{},{},{},{},{}\n",
            r.prediction, r.predictive_entropy, r.expected_entropy, r.mutual_information, r.max_confidence, r.confidence_std
        ));
    }
    s
}

fn parse_err(source: &str, line: usize, msg: impl Into<String>) -> UqError {
    UqError::Parse { path: source.to_string(), line, msg: msg.into() }
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, source: &str, line: usize) -> Result<T> {
    let raw = cols.get(i).ok_or_else(|| parse_err(source, line, format!("missing column {i}")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(source, line, format!("cannot parse {raw:?}")))
}

fn data_lines<'a>(text: &'a str, header: &str, source: &str) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => Ok(lines.map(|(i, l)| (i + 1, l))),
        Some((_, h)) => Err(parse_err(source, 1, format!("expected header {header:?}, found {h:?}"))),
        None => Err(parse_err(source, 1, "empty file")),
    }
}

/// Reads [`uncertainty_csv`] output back: the table and, if every row has
/// one, the label column.
pub fn parse_uncertainty_csv(text: &str, source: &str) -> Result<(Vec<SampleUncertainty>, Option<Vec<usize>>)> {
    let header = "sample,prediction,label,predictive_entropy,expected_entropy,mutual_information,max_confidence,confidence_std";
    let mut records = Vec::new();
    let mut labels = Vec::new();
    for (line, l) in data_lines(text, header, source)? {
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 8 {
            return Err(parse_err(source, line, format!("expected 8 columns, found {}", cols.len())));
        }
        if field::<usize>(&cols, 0, source, line)? != records.len() {
            return Err(parse_err(source, line, "sample indices must be 0, 1, 2, ..."));
        }
        if !cols[2].trim().is_empty() {
            labels.push(field::<usize>(&cols, 2, source, line)?);
        }
        records.push(SampleUncertainty {
            prediction: field(&cols, 1, source, line)?,
            predictive_entropy: field(&cols, 3, source, line)?,
            expected_entropy: field(&cols, 4, source, line)?,
            mutual_information: field(&cols, 5, source, line)?,
            max_confidence: field(&cols, 6, source, line)?,
            confidence_std: field(&cols, 7, source, line)?,
        });
    }
    let labels = (labels.len() == records.len() && !labels.is_empty()).then_some(labels);
    Ok((records, labels))
}

/// `sample,set_size,members` with members joined by `;`.
pub fn prediction_sets_csv(sets: &PredictionSets) -> String {
    let mut s = String::from("sample,set_size,members\n");
    for i in 0..sets.len() {
        let members: Vec<String> = sets.members(i).iter().map(usize::to_string).collect();
        s.push_str(&format!("{i},{},{}\n", sets.size(i), members.join(";")));
    }
    s
}

/// Reads [`prediction_sets_csv`] output back.
pub fn parse_prediction_sets_csv(text: &str, source: &str, n_classes: usize, force_argmax: bool) -> Result<PredictionSets> {
    let mut members = Vec::new();
    for (line, l) in data_lines(text, "sample,set_size,members", source)? {
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 3 {
            return Err(parse_err(source, line, format!("expected 3 columns, found {}", cols.len())));
        }
        let size: usize = field(&cols, 1, source, line)?;
        let m: Vec<usize> = cols[2]
            .split(';')
            .filter(|x| !x.trim().is_empty())
            .map(|x| x.trim().parse().map_err(|_| parse_err(source, line, format!("bad member {x:?}"))))
            .collect::<Result<_>>()?;
        if m.len() != size {
            return Err(parse_err(source, line, "set_size disagrees with member count"));
        }
        if let Some(&bad) = m.iter().find(|&&c| c >= n_classes) {
            return Err(parse_err(source, line, format!("class {bad} out of range for {n_classes} classes")));
        }
        members.push(m);
    }
    PredictionSets::from_members(n_classes, &members, force_argmax)
}

/// `bin_lo,bin_hi,count,conf,acc`.
pub fn reliability_csv(bins: &ReliabilityBins) -> String {
    let mut s = String::from("bin_lo,bin_hi,count,conf,acc\n");
    for b in &bins.bins {
        s.push_str(&format!("{},{},{},{},{}\n", b.lo, b.hi, b.count, b.mean_confidence, b.accuracy));
    }
    s
}

/// `sample,set_size,entropy,correct` with `correct` as 0/1.
pub fn joint_csv(records: &[JointRecord]) -> String {
    let mut s = String::from("sample,set_size,entropy,correct\n");
    for r in records {
        s.push_str(&format!("{},{},{},{}\n", r.sample, r.set_size, r.predictive_entropy, u8::from(r.correct)));
    }
    s
}

/// `set_size,count,mean_entropy,std_entropy`.
pub fn setsize_groups_csv(groups: &[SetSizeGroup]) -> String {
    let mut s = String::from("set_size,count,mean_entropy,std_entropy\n");
    for g in groups {
        s.push_str(&format!("{},{},{},{}\n", g.set_size, g.count, g.mean_entropy, g.std_entropy));
    }
    s
}

/// One row per class key plus an `all` row; columns are set sizes `0..=C`.
pub fn set_size_histogram_csv(h: &SetSizeHistogram) -> String {
    let sizes: Vec<String> = (0..h.global.len()).map(|k| format!("size_{k}")).collect();
    let mut s = format!("class,{}\n", sizes.join(","));
    let row = |counts: &[usize]| counts.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    s.push_str(&format!("all,{}\n", row(&h.global)));
    for (c, counts) in h.per_class.iter().enumerate() {
        s.push_str(&format!("{c},{}\n", row(counts)));
    }
    s
}

/// `bin_lo,bin_hi,count` over `[0, 1]`.
pub fn score_histogram_csv(counts: &[usize]) -> String {
    let n = counts.len() as f64;
    let mut s = String::from("bin_lo,bin_hi,count\n");
    for (b, c) in counts.iter().enumerate() {
        s.push_str(&format!("{},{},{c}\n", b as f64 / n, (b + 1) as f64 / n));
    }
    s
}

/// `rank,sample,class,mean,std`, ordered by ascending mean confidence.
pub fn confidence_profile_csv(points: &[ConfidencePoint]) -> String {
    let mut s = String::from("rank,sample,class,mean,std\n");
    for (rank, p) in points.iter().enumerate() {
        s.push_str(&format!("{rank},{},{},{},{}\n", p.sample, p.class, p.mean, p.std));
    }
    s
}

/// `class,count_correct,count_incorrect,mean_entropy_correct,mean_entropy_incorrect`;
/// absent means are empty cells.
pub fn entropy_by_class_csv(classes: &[ClassEntropy]) -> String {
    let mut s = String::from("class,count_correct,count_incorrect,mean_entropy_correct,mean_entropy_incorrect\n");
    for c in classes {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            c.class,
            c.count_correct,
            c.count_incorrect,
            opt(c.mean_entropy_correct),
            opt(c.mean_entropy_incorrect)
        ));
    }
    s
}

/// `class,count,min,q1,median,q3,max`; classes without samples have count 0
/// and empty statistics.
pub fn entropy_distribution_csv(dist: &[Option<FiveNumber>]) -> String {
    let mut s = String::from("class,count,min,q1,median,q3,max\n");
    for (c, d) in dist.iter().enumerate() {
        match d {
            Some(f) => s.push_str(&format!("{c},{},{},{},{},{},{}\n", f.count, f.min, f.q1, f.median, f.q3, f.max)),
            None => s.push_str(&format!("{c},0,,,,,\n")),
        }
    }
    s
}

/// Rows are true classes, columns predicted classes.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let cols: Vec<String> = (0..cm.n_classes).map(|c| format!("pred_{c}")).collect();
    let mut s = format!("true,{}\n", cols.join(","));
    for (c, row) in cm.counts.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        s.push_str(&format!("{c},{}\n", cells.join(",")));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PassTensor, ProbMatrix};

    fn table() -> UncertaintyTable {
        let a = ProbMatrix::from_rows(&[vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap();
        let b = ProbMatrix::from_rows(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        UncertaintyTable::from_passes(&PassTensor::from_passes(&[a, b]).unwrap()).unwrap()
    }

    #[test]
    fn uncertainty_roundtrip() {
        let t = table();
        let csv = uncertainty_csv(&t, Some(&[0, 0]));
        let (records, labels) = parse_uncertainty_csv(&csv, "mem").unwrap();
        assert_eq!(records, t.records);
        assert_eq!(labels, Some(vec![0, 0]));

        let (_, labels) = parse_uncertainty_csv(&uncertainty_csv(&t, None), "mem").unwrap();
        assert_eq!(labels, None);
    }

    #[test]
    fn uncertainty_parse_errors() {
        assert!(matches!(parse_uncertainty_csv("", "x"), Err(UqError::Parse { .. })));
        assert!(matches!(parse_uncertainty_csv("a,b\n", "x"), Err(UqError::Parse { .. })));
        let bad = uncertainty_csv(&table(), None).replace("\n1,", "\n5,");
        assert!(matches!(parse_uncertainty_csv(&bad, "x"), Err(UqError::Parse { line: 3, .. })));
    }

    #[test]
    fn prediction_sets_roundtrip() {
        let sets = PredictionSets::from_members(3, &[vec![0], vec![0, 2], vec![], vec![0, 1, 2]], false).unwrap();
        let csv = prediction_sets_csv(&sets);
        assert!(csv.contains("\n1,2,0;2\n") && csv.contains("\n2,0,\n"));
        let back = parse_prediction_sets_csv(&csv, "mem", 3, false).unwrap();
        assert_eq!(back, sets);
        assert!(parse_prediction_sets_csv(&csv, "mem", 2, false).is_err());
    }

    #[test]
    fn csv_headers() {
        let cm = ConfusionMatrix { n_classes: 2, counts: vec![vec![3, 1], vec![0, 2]] };
        assert_eq!(confusion_csv(&cm), "true,pred_0,pred_1\n0,3,1\n1,0,2\n");
        let h = SetSizeHistogram { global: vec![0, 2, 1], per_class: vec![vec![0, 1, 1], vec![0, 1, 0]] };
        assert_eq!(set_size_histogram_csv(&h), "class,size_0,size_1,size_2\nall,0,2,1\n0,0,1,1\n1,0,1,0\n");
        assert_eq!(score_histogram_csv(&[1, 2]), "bin_lo,bin_hi,count\n0,0.5,1\n0.5,1,2\n");
        assert_eq!(entropy_distribution_csv(&[None]), "class,count,min,q1,median,q3,max\n0,0,,,,,\n");
    }
}
