//! Reader for the IDX format used by MNIST and Fashion-MNIST.
//!
//! Files are big-endian: a 4-byte magic whose last byte is the number of
//! dimensions, one u32 per dimension, then a `u8` payload. Files must be
//! decompressed first (`gunzip train-images-idx3-ubyte.gz`).

use std::fs;
use std::path::Path;

use super::{Labels, Matrix};
use crate::error::{Result, UqError};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(UqError::Truncated {
            expected: at + 4,
            found: bytes.len(),
        })
}

fn parse_header(bytes: &[u8], magic: u32) -> Result<(Vec<u32>, &[u8])> {
    let found = read_u32_be(bytes, 0)?;
    if found != magic {
        return Err(UqError::BadMagic {
            expected: format!("{magic:#010x}"),
            found: format!("{found:#010x}"),
        });
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank)
        .map(|k| read_u32_be(bytes, 4 + 4 * k))
        .collect::<Result<Vec<_>>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| UqError::DimOverflow(dims.iter().map(|&d| u64::from(d)).collect()))?;
    let payload = &bytes[4 + 4 * rank..];
    if payload.len() < count {
        return Err(UqError::Truncated {
            expected: 4 + 4 * rank + count,
            found: bytes.len(),
        });
    }
    if payload.len() > count {
        return Err(UqError::TrailingBytes(payload.len() - count));
    }
    Ok((dims, payload))
}

/// Decodes an image file into an N×(rows·cols) matrix, pixel `p` → `p/255`,
/// each image flattened row-major.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Matrix> {
    let (dims, payload) = parse_header(bytes, IMAGES_MAGIC)?;
    let n = dims[0] as usize;
    let pixels = dims[1] as usize * dims[2] as usize;
    let values = payload.iter().map(|&p| f32::from(p) / 255.0).collect();
    Matrix::new(n, pixels, values)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Labels> {
    let (_, payload) = parse_header(bytes, LABELS_MAGIC)?;
    Ok(Labels::new(payload.iter().map(|&y| usize::from(y)).collect()))
}

pub fn load_idx_images(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| UqError::io(path, e))?;
    parse_idx_images(&bytes)
}

pub fn load_idx_labels(path: &Path) -> Result<Labels> {
    let bytes = fs::read(path).map_err(|e| UqError::io(path, e))?;
    parse_idx_labels(&bytes)
}

/// Builds an IDX image file from raw pixel bytes.
pub fn encode_idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for word in [IMAGES_MAGIC, n, rows, cols] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_image_is_zero_row() {
        let m = parse_idx_images(&encode_idx_images(1, 28, 28, &[0; 784])).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 784));
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn byte_255_is_one() {
        let mut px = vec![0u8; 784];
        px[5] = 255;
        px[6] = 51;
        let m = parse_idx_images(&encode_idx_images(1, 28, 28, &px)).unwrap();
        assert_eq!(m.values()[5], 1.0);
        assert_eq!(m.values()[6], 0.2);
    }

    #[test]
    fn row_major_flattening() {
        let px: Vec<u8> = (0..12).collect();
        let m = parse_idx_images(&encode_idx_images(2, 2, 3, &px)).unwrap();
        assert_eq!(m.cols(), 6);
        assert_eq!(m.row(1)[0], 6.0 / 255.0);
    }

    #[test]
    fn labels_decode() {
        let y = parse_idx_labels(&encode_idx_labels(&[9, 0, 3])).unwrap();
        assert_eq!(y.as_slice(), &[9, 0, 3]);
    }

    #[test]
    fn magic_mismatch_rejected() {
        let bytes = encode_idx_labels(&[1, 2]);
        assert!(matches!(parse_idx_images(&bytes), Err(UqError::BadMagic { .. })));
        let bytes = encode_idx_images(1, 1, 1, &[0]);
        assert!(matches!(parse_idx_labels(&bytes), Err(UqError::BadMagic { .. })));
    }

    #[test]
    fn overflow_and_truncation_rejected() {
        let bytes = encode_idx_images(u32::MAX, u32::MAX, u32::MAX, &[]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(UqError::DimOverflow(_)) | Err(UqError::Truncated { .. })
        ));
        let bytes = encode_idx_images(2, 28, 28, &[0; 784]);
        assert!(matches!(parse_idx_images(&bytes), Err(UqError::Truncated { .. })));
    }
}
