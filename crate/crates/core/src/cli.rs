//! Command-line front end.
//!
//! Every command writes its artifacts into `--out-dir` (atomically) and
//! prints a short summary to stdout in the chosen `--format`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::calibration;
use crate::compare;
use crate::conformal::{self, ClassKey};
use crate::data::idx::{load_idx_images, load_idx_labels};
use crate::data::io::{
    load_labels_csv, load_matrix, load_pass_tensor, load_prob_matrix, load_weights, save_labels_csv, save_matrix,
    save_pass_tensor, save_prob_matrix,
};
use crate::data::split::split_by_counts;
use crate::data::{Labels, Matrix};
use crate::error::{Result, UqError};
use crate::mcdropout::{self, EntropyUnit, UncertaintyTable};
use crate::mininet::{self, MiniNet, TrainConfig, DEFAULT_DROPOUT, DEFAULT_PASSES};
use crate::pipeline::{self, BlobKind, PipelineConfig};
use crate::report::{self, write_json, write_text, RunManifest, SCORE_BINS};
use crate::sparsity::{self, DEFAULT_BOUNDARIES};
use crate::synthetic::blobs;

#[derive(Debug, Parser)]
#[command(name = "uqkit", version, about = "Conformal prediction and MC-dropout uncertainty toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving all artifacts.
    #[arg(long, global = true, default_value = "uqkit-out")]
    pub out_dir: PathBuf,
    /// Format of the stdout summary.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KeyArg {
    True,
    Predicted,
}

impl From<KeyArg> for ClassKey {
    fn from(k: KeyArg) -> Self {
        match k {
            KeyArg::True => ClassKey::TrueLabel,
            KeyArg::Predicted => ClassKey::Predicted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BlobArg {
    Blobs,
    Overlap,
}

impl From<BlobArg> for BlobKind {
    fn from(b: BlobArg) -> Self {
        match b {
            BlobArg::Blobs => BlobKind::Separable,
            BlobArg::Overlap => BlobKind::Overlapping,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the dropout MLP and write checkpoint, history and data splits.
    Train(TrainArgs),
    /// Run T stochastic forward passes and write the pass tensor.
    Mcpass(McpassArgs),
    /// Calibrate a conformal threshold and build prediction sets.
    Conformal(ConformalArgs),
    /// Decompose MC-dropout uncertainty per sample and per class.
    Uncertainty(UncertaintyArgs),
    /// Expected calibration error, reliability table, confusion matrix.
    Ece(EceArgs),
    /// Global-magnitude sparsity profile of a weight blob.
    Sparsity(SparsityArgs),
    /// Combined comparison report, end to end or from earlier outputs.
    Report(ReportArgs),
    /// Convert IDX image/label files to a feature tensor and labels CSV.
    IdxConvert(IdxConvertArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `blobs`, `overlap`, or a rank-2 feature tensor file.
    #[arg(long, default_value = "blobs")]
    pub data: String,
    /// Labels CSV, required with a feature file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Population size of synthetic data.
    #[arg(long, default_value_t = 5500)]
    pub n_samples: usize,
    /// Calibration samples (default: n/11 for synthetic data, else
    /// min(2000, n/10)).
    #[arg(long)]
    pub cal_size: Option<usize>,
    /// Test samples (default: 4n/11 for synthetic data, else n/7).
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "32,16")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_DROPOUT)]
    pub dropout: f64,
}

#[derive(Debug, Args)]
pub struct McpassArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Rank-2 feature tensor.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PASSES)]
    pub passes: usize,
}

#[derive(Debug, Args)]
pub struct ConformalArgs {
    #[arg(long)]
    pub cal_probs: PathBuf,
    #[arg(long)]
    pub cal_labels: PathBuf,
    #[arg(long)]
    pub test_probs: PathBuf,
    #[arg(long)]
    pub test_labels: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Allow empty prediction sets.
    #[arg(long)]
    pub no_force_argmax: bool,
    /// Label that keys per-class histogram rows.
    #[arg(long, value_enum, default_value_t = KeyArg::True)]
    pub key: KeyArg,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    #[arg(long)]
    pub passes: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Report entropies in bits instead of nats.
    #[arg(long)]
    pub bits: bool,
    #[arg(long, value_enum, default_value_t = KeyArg::True)]
    pub key: KeyArg,
}

#[derive(Debug, Args)]
pub struct EceArgs {
    /// Rank-2 probability matrix.
    #[arg(long, conflicts_with = "passes")]
    pub probs: Option<PathBuf>,
    /// Rank-3 pass tensor (its mean prediction is scored).
    #[arg(long)]
    pub passes: Option<PathBuf>,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = calibration::DEFAULT_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct SparsityArgs {
    #[arg(long, conflicts_with = "weights")]
    pub checkpoint: Option<PathBuf>,
    /// Rank-1 weight tensor.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub boundaries: Option<Vec<f64>>,
    /// Report sparsity at this cutoff.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Find the smallest cutoff reaching this sparsity fraction.
    #[arg(long)]
    pub target: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run the whole pipeline on synthetic blobs.
    #[arg(long, value_enum, conflicts_with_all = ["sets", "uncertainty"])]
    pub pipeline: Option<BlobArg>,
    /// `prediction_sets.csv` from `conformal`.
    #[arg(long)]
    pub sets: Option<PathBuf>,
    /// `uncertainty.csv` from `uncertainty`.
    #[arg(long)]
    pub uncertainty: Option<PathBuf>,
    /// Labels CSV; defaults to the label column of the uncertainty file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Adds a sparsity profile.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub n_classes: Option<usize>,
    #[arg(long, default_value_t = calibration::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_PASSES)]
    pub passes: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 500)]
    pub n_cal: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_test: usize,
}

#[derive(Debug, Args)]
pub struct IdxConvertArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
}

/// Parses `std::env::args`, runs, prints, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let format = cli.global.format;
    match run(cli) {
        Ok(summary) => {
            print!("{}", render(&summary, format));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Sizes rayon's global pool from `UQKIT_THREADS` (unset or 0: automatic).
pub fn configure_threads() {
    let n = std::env::var("UQKIT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs a parsed command and returns its stdout summary.
pub fn run(cli: Cli) -> Result<Value> {
    let g = &cli.global;
    match &cli.command {
        Command::Train(a) => cmd_train(g, a),
        Command::Mcpass(a) => cmd_mcpass(g, a),
        Command::Conformal(a) => cmd_conformal(g, a),
        Command::Uncertainty(a) => cmd_uncertainty(g, a),
        Command::Ece(a) => cmd_ece(g, a),
        Command::Sparsity(a) => cmd_sparsity(g, a),
        Command::Report(a) => cmd_report(g, a),
        Command::IdxConvert(a) => cmd_idx_convert(g, a),
    }
}

/// JSON: pretty-printed. CSV: `key,value` rows of the scalar fields, nested
/// objects flattened with dotted keys.
pub fn render(summary: &Value, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(summary).unwrap_or_default() + "\n",
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", summary, &mut rows);
            let mut s = String::from("key,value\n");
            for (k, v) in rows {
                s.push_str(&format!("{k},{v}\n"));
            }
            s
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Array(_) => {}
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn manifest(g: &GlobalArgs, command: &str, inputs: &[&Path]) -> RunManifest {
    let mut m = RunManifest::new(command, &g.out_dir);
    for p in inputs {
        m = m.input(p);
    }
    m.seeds = vec![g.seed];
    m
}

fn usage(msg: impl Into<String>) -> UqError {
    UqError::InvalidArgument(msg.into())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn cmd_train(g: &GlobalArgs, a: &TrainArgs) -> Result<Value> {
    let (features, labels, inputs, synthetic) = match a.data.as_str() {
        "blobs" | "overlap" => {
            let kind = if a.data == "blobs" { BlobKind::Separable } else { BlobKind::Overlapping };
            let (f, l) = blobs(&kind.spec(a.n_samples), g.seed);
            (f, l, vec![format!("synthetic:{}", a.data)], true)
        }
        path => {
            let path = Path::new(path);
            let labels_path = a
                .labels
                .as_deref()
                .ok_or_else(|| usage("--labels is required when --data is a file"))?;
            let f = load_matrix(path)?;
            let l = load_labels_csv(labels_path)?;
            let inputs = vec![path.display().to_string(), labels_path.display().to_string()];
            (f, l, inputs, false)
        }
    };
    let n = features.rows();
    let n_classes = labels.n_classes_seen();
    labels.check_aligned(n, n_classes)?;
    let (default_cal, default_test) = if synthetic { (n / 11, 4 * n / 11) } else { (2000.min(n / 10), n / 7) };
    let split = split_by_counts(
        n,
        a.cal_size.unwrap_or(default_cal),
        a.test_size.unwrap_or(default_test),
        g.seed,
    )?;

    let mut dims = vec![features.cols()];
    dims.extend(&a.hidden);
    dims.push(n_classes);
    let mut net = MiniNet::init(&dims, a.dropout, g.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        seed: g.seed,
    };
    let history = net.train(&features.select_rows(&split.train_idx), &labels.select(&split.train_idx), &cfg)?;

    let out = &g.out_dir;
    mininet::save_checkpoint(&net, &out.join("model.uqtk"))?;
    write_text(&out.join("history.csv"), &history.to_csv())?;
    write_json(&out.join("split.json"), &split)?;
    for (name, idx) in [("cal", &split.cal_idx), ("test", &split.test_idx)] {
        let x = features.select_rows(idx);
        save_matrix(&out.join(format!("{name}_features.uqtk")), &x)?;
        save_labels_csv(&out.join(format!("{name}_labels.csv")), &labels.select(idx))?;
        save_prob_matrix(&out.join(format!("{name}_probs.uqtk")), &net.predict(&x)?)?;
    }
    let mut m = manifest(g, "train", &[]);
    m.inputs = inputs;
    let summary = json!({
        "manifest": m,
        "layer_dims": net.layer_dims(),
        "dropout_rate": net.dropout_rate(),
        "hyperparameter_origin": "uqkit defaults",
        "train_config": cfg,
        "n_train": split.train_idx.len(),
        "n_cal": split.cal_idx.len(),
        "n_test": split.test_idx.len(),
        "final_loss": history.loss.last(),
        "final_accuracy": history.accuracy.last(),
    });
    write_json(&out.join("train.json"), &summary)?;
    Ok(summary)
}

fn cmd_mcpass(g: &GlobalArgs, a: &McpassArgs) -> Result<Value> {
    if a.passes == 0 {
        return Err(usage("--passes must be >= 1"));
    }
    let net = mininet::load_checkpoint(&a.checkpoint)?;
    let x = load_matrix(&a.features)?;
    let passes = net.mc_forward(&x, a.passes, g.seed)?;
    let out = &g.out_dir;
    save_pass_tensor(&out.join("passes.uqtk"), &passes)?;
    save_prob_matrix(&out.join("mean_probs.uqtk"), &mcdropout::mean_prediction(&passes))?;
    let mut m = manifest(g, "mcpass", &[&a.checkpoint, &a.features]);
    m.passes = Some(a.passes);
    let summary = json!({
        "manifest": m,
        "n_passes": passes.n_passes(),
        "n_samples": passes.n_samples(),
        "n_classes": passes.n_classes(),
    });
    write_json(&out.join("mcpass.json"), &summary)?;
    Ok(summary)
}

fn cmd_conformal(g: &GlobalArgs, a: &ConformalArgs) -> Result<Value> {
    check_alpha(a.alpha)?;
    let cal = load_prob_matrix(&a.cal_probs)?;
    let cal_y = load_labels_csv(&a.cal_labels)?;
    let test = load_prob_matrix(&a.test_probs)?;
    let test_y = load_labels_csv(&a.test_labels)?;
    if cal.n_classes() != test.n_classes() {
        return Err(UqError::LengthMismatch {
            what: "test classes",
            expected: cal.n_classes(),
            found: test.n_classes(),
        });
    }
    test_y.check_aligned(test.n_samples(), test.n_classes())?;

    let scores = conformal::nonconformity_scores(&cal, &cal_y)?;
    let q = conformal::calibration_quantile(&scores, a.alpha)?;
    let sets = conformal::prediction_sets(&test, &q, !a.no_force_argmax);
    let coverage = conformal::empirical_coverage(&sets, &test_y)?;
    let size = conformal::mean_set_size(&sets)?;
    let key = ClassKey::from(a.key);
    let keys = match key {
        ClassKey::TrueLabel => test_y.clone(),
        ClassKey::Predicted => Labels::new(test.predictions()),
    };
    let hist = conformal::set_size_histogram(&sets, &keys)?;
    let score_hist = conformal::score_histogram(&scores, SCORE_BINS)?;

    let out = &g.out_dir;
    write_text(&out.join("prediction_sets.csv"), &report::prediction_sets_csv(&sets))?;
    write_text(&out.join("set_size_histogram.csv"), &report::set_size_histogram_csv(&hist))?;
    write_text(&out.join("score_histogram.csv"), &report::score_histogram_csv(&score_hist))?;
    let rep = report::ConformalReport::new(&q, &sets, coverage, size, key, &hist, score_hist);
    let mut m = manifest(g, "conformal", &[&a.cal_probs, &a.cal_labels, &a.test_probs, &a.test_labels]);
    m.alpha = Some(a.alpha);
    let mut summary = serde_json::to_value(&rep)?;
    summary["manifest"] = serde_json::to_value(&m)?;
    write_json(&out.join("conformal.json"), &summary)?;
    Ok(summary)
}

fn cmd_uncertainty(g: &GlobalArgs, a: &UncertaintyArgs) -> Result<Value> {
    let passes = load_pass_tensor(&a.passes)?;
    let labels = load_labels_csv(&a.labels)?;
    labels.check_aligned(passes.n_samples(), passes.n_classes())?;
    let unit = if a.bits { EntropyUnit::Bits } else { EntropyUnit::Nats };
    let table = UncertaintyTable::from_passes(&passes)?.in_unit(unit);
    let key = ClassKey::from(a.key);
    let c = passes.n_classes();
    let summary = report::uncertainty_summary(&table.records, Some(table.n_passes), c, &labels, key, unit)?;
    let entropy = table.predictive_entropies();
    let dist = mcdropout::classwise_entropy_distribution(&entropy, &labels, c)?;
    let mean = mcdropout::mean_prediction(&passes);
    let keys: Vec<usize> = match key {
        ClassKey::TrueLabel => labels.as_slice().to_vec(),
        ClassKey::Predicted => mean.predictions(),
    };
    let by_class = mcdropout::ClassUncertaintySummary { key, classes: summary.classes.clone() }
        .with_classwise_std(&mcdropout::classwise_std(&passes), &keys);

    let out = &g.out_dir;
    write_text(&out.join("uncertainty.csv"), &report::uncertainty_csv(&table, Some(labels.as_slice())))?;
    write_text(&out.join("entropy_by_class.csv"), &report::entropy_by_class_csv(&summary.classes))?;
    write_text(&out.join("entropy_distribution.csv"), &report::entropy_distribution_csv(&dist))?;
    write_text(
        &out.join("confidence_profile.csv"),
        &report::confidence_profile_csv(&mcdropout::confidence_profile(&passes)),
    )?;
    let mut m = manifest(g, "uncertainty", &[&a.passes, &a.labels]);
    m.passes = Some(passes.n_passes());
    let full = json!({
        "manifest": m,
        "summary": summary,
        "by_class": by_class,
        "entropy_distribution": dist,
    });
    write_json(&out.join("uncertainty.json"), &full)?;
    let mut brief = serde_json::to_value(&summary)?;
    if let Value::Object(map) = &mut brief {
        map.remove("classes");
    }
    Ok(json!({ "manifest": full["manifest"], "summary": brief }))
}

fn cmd_ece(g: &GlobalArgs, a: &EceArgs) -> Result<Value> {
    let (probs, input) = match (&a.probs, &a.passes) {
        (Some(p), None) => (load_prob_matrix(p)?, p),
        (None, Some(p)) => (mcdropout::mean_prediction(&load_pass_tensor(p)?), p),
        _ => return Err(usage("exactly one of --probs or --passes is required")),
    };
    if a.bins == 0 {
        return Err(usage("--bins must be >= 1"));
    }
    let labels = load_labels_csv(&a.labels)?;
    let rel = calibration::ece(&probs, &labels, a.bins)?;
    let cm = calibration::confusion_matrix(&probs, &labels)?;
    let out = &g.out_dir;
    write_text(&out.join("reliability.csv"), &report::reliability_csv(&rel))?;
    write_text(&out.join("confusion.csv"), &report::confusion_csv(&cm))?;
    let mut m = manifest(g, "ece", &[input, &a.labels]);
    m.bins = Some(a.bins);
    let summary = json!({
        "manifest": m,
        "bins": a.bins,
        "ece": rel.ece,
        "accuracy": cm.accuracy()?,
        "reliability": rel.bins,
        "confusion_matrix": cm,
    });
    write_json(&out.join("ece.json"), &summary)?;
    Ok(summary)
}

fn load_any_weights(checkpoint: Option<&Path>, weights: Option<&Path>) -> Result<(crate::data::WeightVector, PathBuf)> {
    match (checkpoint, weights) {
        (Some(p), None) => Ok((mininet::load_checkpoint(p)?.export_weights(), p.to_path_buf())),
        (None, Some(p)) => Ok((load_weights(p)?, p.to_path_buf())),
        _ => Err(usage("exactly one of --checkpoint or --weights is required")),
    }
}

fn cmd_sparsity(g: &GlobalArgs, a: &SparsityArgs) -> Result<Value> {
    let (w, input) = load_any_weights(a.checkpoint.as_deref(), a.weights.as_deref())?;
    let boundaries = a.boundaries.clone().unwrap_or_else(|| DEFAULT_BOUNDARIES.to_vec());
    let profile = sparsity::sparsity_profile(&w, &boundaries)?;
    let mut summary = json!({
        "manifest": manifest(g, "sparsity", &[&input]),
        "total": profile.total,
        "profile": profile,
    });
    if let Some(t) = a.threshold {
        summary["threshold"] = json!({ "t": t, "sparsity": sparsity::sparsity_at_threshold(&w, t)? });
    }
    if let Some(kappa) = a.target {
        let (t, achieved) = sparsity::threshold_for_target_sparsity(&w, kappa)?;
        summary["target"] = json!({ "kappa": kappa, "t": t, "achieved": achieved });
    }
    let out = &g.out_dir;
    write_text(&out.join("sparsity.csv"), &profile.to_csv())?;
    write_json(&out.join("sparsity.json"), &summary)?;
    Ok(summary)
}

fn cmd_report(g: &GlobalArgs, a: &ReportArgs) -> Result<Value> {
    if a.bins == 0 {
        return Err(usage("--bins must be >= 1"));
    }
    let report = match a.pipeline {
        Some(kind) => report_pipeline(g, a, kind.into())?,
        None => report_from_files(g, a)?,
    };
    let mut brief = json!({
        "manifest": report.manifest,
        "spearman_rho": report.comparison.spearman_rho,
        "ece": report.calibration.ece,
        "accuracy": report.calibration.accuracy,
        "mean_entropy_correct": report.uncertainty.mean_entropy_correct,
        "mean_entropy_incorrect": report.uncertainty.mean_entropy_incorrect,
    });
    if let Some(c) = &report.conformal {
        brief["coverage"] = json!(c.coverage);
        brief["mean_set_size"] = json!(c.mean_set_size);
        brief["q_hat"] = json!(c.q_hat);
    }
    Ok(brief)
}

fn report_pipeline(g: &GlobalArgs, a: &ReportArgs, kind: BlobKind) -> Result<report::Report> {
    check_alpha(a.alpha)?;
    if a.passes == 0 {
        return Err(usage("--passes must be >= 1"));
    }
    let cfg = PipelineConfig {
        blobs: kind,
        n_train: a.n_train,
        n_cal: a.n_cal,
        n_test: a.n_test,
        seed: g.seed,
        alpha: a.alpha,
        passes: a.passes,
        bins: a.bins,
        epochs: a.epochs,
        ..PipelineConfig::default()
    };
    let run = pipeline::run(&cfg)?;
    let mut m = manifest(g, "report", &[]);
    m.inputs = vec![format!("synthetic:{}", serde_json::to_value(kind)?.as_str().unwrap_or_default())];
    m.alpha = Some(a.alpha);
    m.passes = Some(a.passes);
    m.bins = Some(a.bins);
    report::write_pipeline_artifacts(&run, &g.out_dir, m)
}

fn report_from_files(g: &GlobalArgs, a: &ReportArgs) -> Result<report::Report> {
    let (Some(sets_path), Some(unc_path)) = (&a.sets, &a.uncertainty) else {
        return Err(usage("report needs --pipeline, or both --sets and --uncertainty"));
    };
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| UqError::Io { path: p.to_path_buf(), source: e });
    let (records, embedded) = report::parse_uncertainty_csv(&read(unc_path)?, &unc_path.display().to_string())?;
    let labels = match (&a.labels, embedded) {
        (Some(p), _) => load_labels_csv(p)?,
        (None, Some(l)) => Labels::new(l),
        (None, None) => return Err(usage("--labels is required when the uncertainty file has no label column")),
    };
    let inferred = records
        .iter()
        .map(|r| r.prediction)
        .chain(labels.as_slice().iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let n_classes = a.n_classes.unwrap_or(inferred);
    let sets = report::parse_prediction_sets_csv(&read(sets_path)?, &sets_path.display().to_string(), n_classes, true)?;
    let table = UncertaintyTable { records, n_passes: 0, n_classes };
    let joint = compare::join(&sets, &table, &labels)?;
    let (rel, cm) = report::calibration_from_records(&table.records, &labels, n_classes, a.bins)?;
    let unc = report::uncertainty_summary(&table.records, None, n_classes, &labels, ClassKey::TrueLabel, EntropyUnit::Nats)?;
    let comparison = report::comparison_summary(&joint)?;
    let sparsity = match &a.checkpoint {
        Some(p) => Some(sparsity::sparsity_profile(&mininet::load_checkpoint(p)?.export_weights(), &DEFAULT_BOUNDARIES)?),
        None => None,
    };

    let mut inputs: Vec<&Path> = vec![sets_path, unc_path];
    inputs.extend(a.labels.as_deref());
    inputs.extend(a.checkpoint.as_deref());
    let mut m = manifest(g, "report", &inputs);
    m.bins = Some(a.bins);
    let rep = report::Report {
        manifest: m,
        model: None,
        conformal: None,
        uncertainty: unc,
        calibration: report::CalibrationSummary { bins: a.bins, ece: rel.ece, accuracy: cm.accuracy()? },
        comparison,
        confusion_matrix: cm,
        sparsity,
    };
    let out = &g.out_dir;
    write_text(&out.join("joint.csv"), &report::joint_csv(&joint))?;
    write_text(&out.join("entropy_by_setsize.csv"), &report::setsize_groups_csv(&rep.comparison.by_set_size))?;
    write_text(&out.join("reliability.csv"), &report::reliability_csv(&rel))?;
    write_text(&out.join("confusion.csv"), &report::confusion_csv(&rep.confusion_matrix))?;
    if let Some(s) = &rep.sparsity {
        write_text(&out.join("sparsity.csv"), &s.to_csv())?;
    }
    write_json(&out.join("report.json"), &rep)?;
    Ok(rep)
}

fn cmd_idx_convert(g: &GlobalArgs, a: &IdxConvertArgs) -> Result<Value> {
    let x: Matrix = load_idx_images(&a.images)?;
    let y = load_idx_labels(&a.labels)?;
    if x.rows() != y.len() {
        return Err(UqError::LengthMismatch { what: "idx labels", expected: x.rows(), found: y.len() });
    }
    let out = &g.out_dir;
    save_matrix(&out.join("features.uqtk"), &x)?;
    save_labels_csv(&out.join("labels.csv"), &y)?;
    let summary = json!({
        "manifest": manifest(g, "idx-convert", &[&a.images, &a.labels]),
        "n_samples": x.rows(),
        "n_features": x.cols(),
        "n_classes": y.n_classes_seen(),
    });
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_global_flags_anywhere() {
        let cli = Cli::try_parse_from(["uqkit", "ece", "--probs", "p.uqtk", "--labels", "l.csv", "--seed", "7", "--format", "csv"])
            .unwrap();
        assert_eq!(cli.global.seed, 7);
        assert_eq!(cli.global.format, Format::Csv);
    }

    #[test]
    fn flatten_summary() {
        let v = json!({"a": 1, "b": {"c": "x", "d": null}, "e": [1, 2]});
        assert_eq!(render(&v, Format::Csv), "key,value\na,1\nb.c,x\nb.d,\n");
    }

    #[test]
    fn conflicting_sources_rejected() {
        assert!(Cli::try_parse_from(["uqkit", "ece", "--probs", "a", "--passes", "b", "--labels", "l"]).is_err());
    }
}
