//! Trains the dropout MLP on overlapping blobs and saves a checkpoint.
//!
//! Run with `cargo run --example train_mininet`.

use uqkit::calibration::accuracy;
use uqkit::mininet::{load_checkpoint, save_checkpoint, MiniNet, TrainConfig};
use uqkit::synthetic::{blobs, BlobSpec};

fn main() -> uqkit::Result<()> {
    let (x, y) = blobs(&BlobSpec::overlapping(3000), 3);
    let mut net = MiniNet::init(&[2, 32, 16, 3], 0.5, 3)?;
    let history = net.train(&x, &y, &TrainConfig { epochs: 10, seed: 3, ..TrainConfig::default() })?;
    for (epoch, (loss, acc)) in history.loss.iter().zip(&history.accuracy).enumerate() {
        println!("epoch {:>2}: loss {loss:.4}  batch accuracy {acc:.3}", epoch + 1);
    }
    println!("deterministic accuracy: {:.3}", accuracy(&net.predict(&x)?, &y)?);

    let dir = std::env::temp_dir().join("uqkit-example");
    let path = dir.join("model.uqtk");
    save_checkpoint(&net, &path)?;
    let restored = load_checkpoint(&path)?;
    println!("checkpoint {} restores identically: {}", path.display(), restored == net);

    let passes = net.mc_forward(&x, 20, 3)?;
    println!("MC pass tensor: {} passes x {} samples x {} classes", passes.n_passes(), passes.n_samples(), passes.n_classes());
    Ok(())
}
