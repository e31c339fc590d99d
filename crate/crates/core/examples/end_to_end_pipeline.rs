//! Full pipeline on synthetic blobs, writing every report artifact.
//!
//! Run with `cargo run --example end_to_end_pipeline -- [out_dir]`.

use std::path::PathBuf;

use uqkit::pipeline::{run, BlobKind, PipelineConfig};
use uqkit::report::{write_pipeline_artifacts, RunManifest};

fn main() -> uqkit::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "uqkit-pipeline".into());
    let config = PipelineConfig { blobs: BlobKind::Overlapping, ..PipelineConfig::default() }.with_seed(7);
    let run = run(&config)?;

    let mut manifest = RunManifest::new("example:end_to_end_pipeline", &out);
    manifest.seeds = vec![config.seed];
    manifest.alpha = Some(config.alpha);
    manifest.passes = Some(config.passes);
    manifest.bins = Some(config.bins);
    let report = write_pipeline_artifacts(&run, &out, manifest)?;

    println!("wrote artifacts to {}", out.display());
    println!("coverage        {:.4}", run.coverage);
    println!("mean set size   {:.3}", run.mean_set_size);
    println!("ECE             {:.4}", report.calibration.ece);
    println!("accuracy        {:.4}", report.calibration.accuracy);
    println!("spearman rho    {:?}", report.comparison.spearman_rho);
    Ok(())
}
