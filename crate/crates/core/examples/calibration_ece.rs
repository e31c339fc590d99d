//! Expected calibration error of an over-confident predictor.
//!
//! Run with `cargo run --example calibration_ece`.

use rand::{RngExt, SeedableRng};
use uqkit::calibration::{confusion_matrix, ece, DEFAULT_BINS};
use uqkit::data::{Labels, ProbMatrix};
use uqkit::rng::SplitMix64;

fn main() -> uqkit::Result<()> {
    let mut rng = SplitMix64::seed_from_u64(1);
    let (mut values, mut labels) = (Vec::new(), Vec::new());
    for _ in 0..10_000 {
        let stated: f64 = 0.5 + 0.5 * rng.random::<f64>();
        // True accuracy lags the stated confidence by 10 points.
        let correct = rng.random::<f64>() < stated - 0.1;
        values.extend([stated, 1.0 - stated]);
        labels.push(usize::from(!correct));
    }
    let probs = ProbMatrix::new(2, values)?;
    let labels = Labels::new(labels);

    let table = ece(&probs, &labels, DEFAULT_BINS)?;
    println!("ECE over {} bins: {:.4}", DEFAULT_BINS, table.ece);
    println!("bin_lo  bin_hi  count  conf   acc");
    for b in table.bins.iter().filter(|b| b.count > 0) {
        println!("{:.3}   {:.3}   {:>5}  {:.3}  {:.3}", b.lo, b.hi, b.count, b.mean_confidence, b.accuracy);
    }
    let cm = confusion_matrix(&probs, &labels)?;
    println!("confusion matrix {:?}, accuracy {:.4}", cm.counts, cm.accuracy()?);
    Ok(())
}
