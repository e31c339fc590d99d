//! Decomposes MC-dropout uncertainty into aleatoric and epistemic parts.
//!
//! Run with `cargo run --example mc_dropout_uncertainty`.

use uqkit::data::{PassTensor, ProbMatrix};
use uqkit::mcdropout::{confidence_profile, EntropyUnit, UncertaintyTable};

fn main() -> uqkit::Result<()> {
    // Three passes over three samples: a confident one, one that is noisy in
    // every pass (aleatoric), and one whose passes disagree (epistemic).
    let passes = PassTensor::from_passes(&[
        ProbMatrix::from_rows(&[vec![0.98, 0.02], vec![0.5, 0.5], vec![0.95, 0.05]])?,
        ProbMatrix::from_rows(&[vec![0.97, 0.03], vec![0.5, 0.5], vec![0.05, 0.95]])?,
        ProbMatrix::from_rows(&[vec![0.99, 0.01], vec![0.5, 0.5], vec![0.90, 0.10]])?,
    ])?;

    let table = UncertaintyTable::from_passes(&passes)?.in_unit(EntropyUnit::Bits);
    println!("sample  pred  H[bits]  E[H]    MI");
    for (i, r) in table.records.iter().enumerate() {
        println!(
            "{i:>6}  {:>4}  {:.4}   {:.4}  {:.4}",
            r.prediction, r.predictive_entropy, r.expected_entropy, r.mutual_information
        );
    }

    println!("\nconfidence profile (ascending):");
    for p in confidence_profile(&passes) {
        println!("  sample {} class {}: {:.3} +/- {:.3}", p.sample, p.class, p.mean, p.std);
    }
    Ok(())
}
