//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs with a custom harness so the report lines reach the terminal even
//! when `cargo test` captures output.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use uqkit::calibration::{ece, DEFAULT_BINS};
use uqkit::conformal::{calibration_quantile, mean_set_size, NonconformityScores, PredictionSets};
use uqkit::data::{Labels, Matrix, PassTensor, ProbMatrix, WeightVector};
use uqkit::mcdropout::{expected_entropy, mean_prediction, mutual_information, predictive_entropy};
use uqkit::mininet::MiniNet;
use uqkit::pipeline::{self, PipelineConfig, PipelineRun};
use uqkit::rng::SplitMix64;
use uqkit::sparsity::{sparsity_profile, DEFAULT_BOUNDARIES};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

const SEEDS: u64 = 100;

/// Shared by criteria 1, 8 and 9: the overlapping-blobs pipeline
/// (3000 train / 500 cal / 2000 test, alpha 0.05) for seeds 0..100.
fn pipeline_runs() -> (Vec<PipelineRun>, Duration) {
    let start = Instant::now();
    let runs = (0..SEEDS)
        .into_par_iter()
        .map(|s| pipeline::run(&PipelineConfig::default().with_seed(s)).expect("pipeline run"))
        .collect();
    (runs, start.elapsed())
}

/// Exact two-sided 99% band of Binomial(n, p) as coverage fractions.
fn binomial_band(n: u64, p: f64) -> (f64, f64) {
    let b = Binomial::new(p, n).unwrap();
    let lo = (0..=n).find(|&k| b.cdf(k) >= 0.005).unwrap();
    let hi = (0..=n).find(|&k| b.cdf(k) >= 0.995).unwrap();
    (lo as f64 / n as f64, hi as f64 / n as f64)
}

fn criterion_1(runs: &[PipelineRun], elapsed: Duration) -> Outcome {
    let cov: Vec<f64> = runs.iter().map(|r| r.coverage).collect();
    let mean = cov.iter().sum::<f64>() / cov.len() as f64;
    let (lo, hi) = binomial_band(500, 0.95);
    let inside = cov.iter().filter(|&&c| c >= lo && c <= hi).count();
    let pass = (0.94..=0.97).contains(&mean) && inside >= 95 && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "mean coverage {mean:.4} (need [0.94, 0.97]); {inside}/100 runs in 99% band [{lo:.3}, {hi:.3}] (need >= 95); {:.1}s (need < 120s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

fn random_row(r: &mut SplitMix64, c: usize) -> Vec<f64> {
    let style = r.random_range(0..4);
    let mut row: Vec<f64> = (0..c)
        .map(|_| match style {
            0 => r.random::<f64>(),
            1 => (r.random::<f64>() * 40.0 - 20.0).exp(),
            2 => if r.random::<f64>() < 0.3 { 0.0 } else { r.random::<f64>() },
            _ => r.random::<f64>().powi(8),
        })
        .collect();
    if row.iter().all(|&v| v == 0.0) {
        row[r.random_range(0..c)] = 1.0;
    }
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
    row
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut worst_gap: f64 = 0.0;
    let mut min_mi = f64::INFINITY;
    let mut errors = 0;
    for _ in 0..1000 {
        let t = r.random_range(1..=64);
        let n = r.random_range(1..=6);
        let c = r.random_range(2..=20);
        let mut values = Vec::with_capacity(t * n * c);
        for _ in 0..t * n {
            values.extend(random_row(&mut r, c));
        }
        let passes = PassTensor::new(t, n, c, values).unwrap();
        let Ok(mi) = mutual_information(&passes) else {
            errors += 1;
            continue;
        };
        let h = predictive_entropy(&mean_prediction(&passes));
        let e = expected_entropy(&passes);
        for i in 0..n {
            // Independent oracle for both entropy terms.
            let mean: Vec<f64> = (0..c)
                .map(|k| (0..t).map(|s| passes.probs(s, i)[k]).sum::<f64>() / t as f64)
                .collect();
            let h_oracle = entropy(&mean);
            let e_oracle = (0..t).map(|s| entropy(passes.probs(s, i))).sum::<f64>() / t as f64;
            worst_gap = worst_gap
                .max((mi[i] - (h[i] - e[i])).abs())
                .max((mi[i] - (h_oracle - e_oracle)).abs());
            min_mi = min_mi.min(mi[i]);
        }
    }
    outcome(
        worst_gap <= 1e-10 && min_mi >= -1e-12 && errors == 0,
        format!("max |MI - (H - E[H])| = {worst_gap:.2e} (need <= 1e-10); min MI = {min_mi:.2e}; {errors} rejected tensors"),
    )
}

fn sets_from_counts(counts: &[usize]) -> PredictionSets {
    let members: Vec<Vec<usize>> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n((0..=i).collect::<Vec<_>>(), n))
        .collect();
    PredictionSets::from_members(10, &members, true).unwrap()
}

fn criterion_3() -> Outcome {
    let a = mean_set_size(&sets_from_counts(&[6431, 1377, 185, 7])).unwrap();
    let b = mean_set_size(&sets_from_counts(&[7551, 398, 44, 7])).unwrap();
    let pass = (a - 1.2210).abs() <= 1e-4 && (b - 1.063375).abs() <= 1e-4;
    outcome(pass, format!("mean set sizes {a:.6} (want 1.2210) and {b:.6} (want 1.063375)"))
}

/// Full sort, then the first rank whose empirical fraction of `n + 1`
/// reaches `1 - alpha`, found by scanning.
fn quantile_oracle(scores: &[f64], alpha: f64) -> (usize, f64) {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut k = 1;
    while k < n && (k as f64) / ((n + 1) as f64) < 1.0 - alpha {
        k += 1;
    }
    (k, sorted[k - 1])
}

fn criterion_4() -> Outcome {
    let mismatches: usize = (0..10_000u64)
        .into_par_iter()
        .map(|case| {
            let mut r = rng(4_000_000 + case);
            let n = if case % 10 == 0 { r.random_range(1..=10) } else { r.random_range(1..=5000) };
            let alpha = 0.01 + r.random::<f64>() * 0.49;
            let grid = r.random_range(0..3);
            let v: Vec<f64> = (0..n)
                .map(|_| {
                    let u = r.random::<f64>();
                    if grid == 0 { (u * 20.0).floor() / 20.0 } else { u }
                })
                .collect();
            let q = calibration_quantile(&NonconformityScores::new(v.clone()).unwrap(), alpha).unwrap();
            let (k, q_oracle) = quantile_oracle(&v, alpha);
            usize::from(q.k != k || q.q_hat != q_oracle)
        })
        .sum();
    outcome(mismatches == 0, format!("{mismatches}/10000 disagreements with the full-sort oracle"))
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let n = 50_000;
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = 0.5 + 0.5 * r.random::<f64>();
        values.extend([c, 1.0 - c]);
        labels.push(usize::from(r.random::<f64>() >= c));
    }
    let calibrated = ece(&ProbMatrix::new(2, values).unwrap(), &Labels::new(labels), DEFAULT_BINS).unwrap().ece;

    let sharp_labels: Vec<usize> = (0..1000).map(|i| i % 4).collect();
    let sharp_values: Vec<f64> = sharp_labels
        .iter()
        .flat_map(|&y| (0..4).map(move |k| if k == y { 1.0 } else { 0.0 }))
        .collect();
    let sharp = ece(&ProbMatrix::new(4, sharp_values).unwrap(), &Labels::new(sharp_labels), DEFAULT_BINS)
        .unwrap()
        .ece;
    outcome(
        calibrated <= 0.02 && sharp == 0.0,
        format!("calibrated ECE {calibrated:.4} (need <= 0.02); sharp correct ECE {sharp} (need exactly 0)"),
    )
}

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let mut bad = 0;
    let mut edges: Vec<f64> = vec![0.0];
    edges.extend(DEFAULT_BOUNDARIES);
    edges.push(f64::INFINITY);
    for _ in 0..1000 {
        let len = r.random_range(1..=2000);
        let w: Vec<f32> = (0..len)
            .map(|_| {
                let pick = r.random_range(0..10);
                let mag = if pick == 0 {
                    DEFAULT_BOUNDARIES[r.random_range(0..DEFAULT_BOUNDARIES.len())]
                } else if pick == 1 {
                    0.0
                } else {
                    10f64.powf(-7.0 + 6.5 * r.random::<f64>())
                };
                let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
                (sign * mag) as f32
            })
            .collect();
        let profile = sparsity_profile(&WeightVector::new(w.clone(), "acceptance").unwrap(), &DEFAULT_BOUNDARIES).unwrap();
        let mut cum = 0usize;
        for (ri, range) in profile.ranges.iter().enumerate() {
            let count = w
                .iter()
                .filter(|x| {
                    let m = f64::from(x.abs());
                    edges[ri] <= m && m < edges[ri + 1]
                })
                .count();
            cum += count;
            let pct = 100.0 * count as f64 / len as f64;
            let cum_pct = 100.0 * cum as f64 / len as f64;
            if range.count != count
                || (range.percent - pct).abs() > 1e-9
                || (range.cumulative_percent - cum_pct).abs() > 1e-9
            {
                bad += 1;
            }
        }
    }
    let w = WeightVector::new(vec![0.1, 0.00002], "header").unwrap();
    let header = sparsity_profile(&w, &DEFAULT_BOUNDARIES).unwrap().to_csv();
    let header = header.lines().next().unwrap_or_default().to_string();
    outcome(
        bad == 0 && header == "range,count,percent,cumulative_percent",
        format!("{bad} range mismatches over 1000 vectors; CSV header `{header}`"),
    )
}

fn criterion_7() -> Outcome {
    let x: Vec<f32> = (0..20).map(|i| ((i * 37 % 17) as f32 - 8.0) / 5.0).collect();
    let x = Matrix::new(5, 4, x).unwrap();
    let y = Labels::new(vec![0, 2, 1, 2, 0]);
    let idx: Vec<usize> = (0..5).collect();
    let loss = |net: &MiniNet| net.loss_and_gradients::<SplitMix64>(&x, &y, &idx, None).unwrap().loss;
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut net = MiniNet::init(&[4, 6, 3], 0.0, seed).unwrap();
        let analytic = net.loss_and_gradients::<SplitMix64>(&x, &y, &idx, None).unwrap().values;
        let base = net.parameters();
        for j in 0..base.len() {
            // Parameters are f32; divide by the step that was actually taken.
            let mut p = base.clone();
            p[j] = base[j] + 1e-4;
            let up = f64::from(p[j]);
            net.set_parameters(&p).unwrap();
            let l_up = loss(&net);
            p[j] = base[j] - 1e-4;
            let down = f64::from(p[j]);
            net.set_parameters(&p).unwrap();
            let l_down = loss(&net);
            let numeric = (l_up - l_down) / (up - down);
            let rel = (analytic[j] - numeric).abs() / (analytic[j].abs() + numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:.2e} over 5 inits of [4, 6, 3] (need <= 1e-4)"))
}

fn criterion_8(runs: &[PipelineRun]) -> Outcome {
    let wins = runs
        .iter()
        .filter(|r| match r.entropy_correct_vs_incorrect() {
            (Some(good), Some(bad)) => bad > good,
            _ => false,
        })
        .count();
    outcome(wins >= 95, format!("misclassified entropy > correct entropy in {wins}/100 seeds (need >= 95)"))
}

fn criterion_9(runs: &[PipelineRun]) -> Outcome {
    let positive = runs.iter().filter(|r| r.spearman_rho.is_some_and(|rho| rho > 0.0)).count();
    let min = runs.iter().filter_map(|r| r.spearman_rho).fold(f64::INFINITY, f64::min);
    outcome(positive >= 95, format!("rho(set size, entropy) > 0 in {positive}/100 seeds, min {min:.3} (need >= 95)"))
}

fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_uqkit"))
            .current_dir(tmp.path())
            .args(["report", "--pipeline", "overlap", "--seed", "42", "--out-dir", "out"])
            .output()
            .unwrap()
    };
    let first = run();
    let a = snapshot(&tmp.path().join("out"));
    let second = run();
    let b = snapshot(&tmp.path().join("out"));
    let ok = first.status.success() && second.status.success() && first.stdout == second.stdout;
    let same = a == b && !a.is_empty();
    outcome(ok && same, format!("{} files compared, identical: {same}; exit codes {:?}/{:?}", a.len(), first.status.code(), second.status.code()))
}

fn main() {
    let (runs, elapsed) = pipeline_runs();
    let results = [
        ("coverage guarantee", criterion_1(&runs, elapsed)),
        ("mutual-information identity", criterion_2()),
        ("efficiency from set-size counts", criterion_3()),
        ("quantile oracle", criterion_4()),
        ("ECE calibrated-oracle limit", criterion_5()),
        ("sparsity oracle", criterion_6()),
        ("gradient check", criterion_7()),
        ("misclassified samples have higher entropy", criterion_8(&runs)),
        ("set size tracks entropy", criterion_9(&runs)),
        ("report determinism", criterion_10()),
    ];
    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        failed += usize::from(!o.pass);
        let tag = if o.pass { "PASS" } else { "FAIL" };
        writeln!(out, "acceptance {:>2} [{tag}] {name}: {}", i + 1, o.detail).unwrap();
    }
    writeln!(out, "acceptance: {} passed, {failed} failed", results.len() - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
