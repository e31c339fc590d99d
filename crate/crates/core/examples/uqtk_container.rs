//! Writes and reads the UQTK tensor container and labels CSV.
//!
//! Run with `cargo run --example uqtk_container`.

use uqkit::data::io::{decode, encode, load_labels_csv, load_pass_tensor, save_labels_csv, save_pass_tensor};
use uqkit::data::{Labels, PassTensor};

fn main() -> uqkit::Result<()> {
    let bytes = encode(&[2, 3], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    println!("header: {:?} version {} rank {}", std::str::from_utf8(&bytes[..4]).unwrap(), bytes[4], bytes[5]);
    println!("{} bytes total", bytes.len());
    let raw = decode(&bytes, Some(2))?;
    println!("decoded dims {:?}, values {:?}", raw.dims, raw.values);
    println!("rank check: {}", decode(&bytes, Some(3)).unwrap_err());

    let dir = std::env::temp_dir().join("uqkit-example");
    let passes = PassTensor::new(2, 1, 2, vec![0.25, 0.75, 0.5, 0.5])?;
    save_pass_tensor(&dir.join("passes.uqtk"), &passes)?;
    println!("pass tensor round-trips: {}", load_pass_tensor(&dir.join("passes.uqtk"))? == passes);

    save_labels_csv(&dir.join("labels.csv"), &Labels::new(vec![3, 1, 4]))?;
    println!("labels: {:?}", load_labels_csv(&dir.join("labels.csv"))?.as_slice());
    Ok(())
}
