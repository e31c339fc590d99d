//! Reads IDX image/label files (the Fashion-MNIST distribution format).
//!
//! Run with `cargo run --example fashion_mnist_idx -- <images> <labels>`.
//! Without arguments a tiny in-memory IDX pair is used instead.

use std::path::PathBuf;

use uqkit::data::idx::{encode_idx_images, encode_idx_labels, load_idx_images, load_idx_labels, parse_idx_images, parse_idx_labels};

fn main() -> uqkit::Result<()> {
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let (images, labels) = if let [img, lab] = args.as_slice() {
        (load_idx_images(img)?, load_idx_labels(lab)?)
    } else {
        let pixels: Vec<u8> = (0..2 * 28 * 28).map(|i| (i % 256) as u8).collect();
        (
            parse_idx_images(&encode_idx_images(2, 28, 28, &pixels))?,
            parse_idx_labels(&encode_idx_labels(&[9, 0]))?,
        )
    };
    println!("{} images of {} pixels, {} labels", images.rows(), images.cols(), labels.len());
    println!("classes present: {}", labels.n_classes_seen());
    let first = images.row(0);
    let mean = first.iter().map(|&p| f64::from(p)).sum::<f64>() / first.len() as f64;
    println!("first image: label {}, mean intensity {mean:.3}", labels.as_slice()[0]);
    Ok(())
}
