//! Split conformal prediction on a hand-made probability matrix.
//!
//! Run with `cargo run --example conformal_sets`.

use uqkit::conformal::{
    calibration_quantile, empirical_coverage, mean_set_size, nonconformity_scores, prediction_sets,
    set_size_histogram,
};
use uqkit::data::{Labels, ProbMatrix};

fn main() -> uqkit::Result<()> {
    // Calibration data: 20 samples of a 3-class classifier whose probability
    // on the true class ranges from 0.1 (badly wrong) to 0.95.
    let mut cal_rows = Vec::new();
    let mut cal_labels = Vec::new();
    for i in 0..20 {
        let y = i % 3;
        let confidence = 0.1 + 0.85 * i as f64 / 19.0;
        let mut row = vec![(1.0 - confidence) / 2.0; 3];
        row[y] = confidence;
        cal_rows.push(row);
        cal_labels.push(y);
    }
    let cal = ProbMatrix::from_rows(&cal_rows)?;
    let cal_labels = Labels::new(cal_labels);

    let scores = nonconformity_scores(&cal, &cal_labels)?;
    let q = calibration_quantile(&scores, 0.1)?;
    println!("alpha = {}, n = {}, k = {}, q_hat = {:.3}", q.alpha, q.n, q.k, q.q_hat);

    let test = ProbMatrix::from_rows(&[
        vec![0.90, 0.05, 0.05],
        vec![0.45, 0.40, 0.15],
        vec![0.34, 0.33, 0.33],
        vec![0.10, 0.20, 0.70],
    ])?;
    let test_labels = Labels::new(vec![0, 1, 2, 2]);
    let sets = prediction_sets(&test, &q, true);
    for i in 0..sets.len() {
        println!("sample {i}: set {:?}", sets.members(i));
    }
    println!("coverage = {:.2}", empirical_coverage(&sets, &test_labels)?);
    println!("mean set size = {:.2}", mean_set_size(&sets)?);
    println!("set-size histogram = {:?}", set_size_histogram(&sets, &test_labels)?.global);
    Ok(())
}
