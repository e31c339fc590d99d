//! Relates conformal set sizes to MC-dropout predictive entropy.
//!
//! Run with `cargo run --example compare_methods`.

use uqkit::compare::entropy_by_setsize;
use uqkit::pipeline::{run, PipelineConfig};

fn main() -> uqkit::Result<()> {
    let run = run(&PipelineConfig::default().with_seed(1))?;
    println!("coverage {:.4}, mean set size {:.3}", run.coverage, run.mean_set_size);
    match run.spearman_rho {
        Some(rho) => println!("Spearman rho(set size, entropy) = {rho:.3}"),
        None => println!("Spearman rho undefined (constant input)"),
    }
    println!("set_size  count  mean_entropy  std_entropy");
    for g in entropy_by_setsize(&run.joint)? {
        println!("{:>8}  {:>5}  {:.4}        {:.4}", g.set_size, g.count, g.mean_entropy, g.std_entropy);
    }
    let (good, bad) = run.entropy_correct_vs_incorrect();
    println!("mean entropy: correct {good:.4?}, misclassified {bad:.4?}");
    Ok(())
}
