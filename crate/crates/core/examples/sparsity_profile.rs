//! Global-magnitude sparsity of a trained network's weights.
//!
//! Run with `cargo run --example sparsity_profile`.

use uqkit::mininet::{MiniNet, TrainConfig};
use uqkit::sparsity::{sparsity_at_threshold, sparsity_profile, threshold_for_target_sparsity, DEFAULT_BOUNDARIES};
use uqkit::synthetic::{blobs, BlobSpec};

fn main() -> uqkit::Result<()> {
    let (x, y) = blobs(&BlobSpec::separable(1500), 0);
    let mut net = MiniNet::init(&[2, 64, 32, 3], 0.5, 0)?;
    net.train(&x, &y, &TrainConfig::default())?;
    let weights = net.export_weights();

    let profile = sparsity_profile(&weights, &DEFAULT_BOUNDARIES)?;
    print!("{}", profile.to_csv());

    println!("\nsparsity at t = 0.01: {:.4}", sparsity_at_threshold(&weights, 0.01)?);
    let (t, achieved) = threshold_for_target_sparsity(&weights, 0.25)?;
    println!("smallest cutoff reaching 25%: t = {t:.5} (achieves {achieved:.4})");
    Ok(())
}
