//! The `UQTK` tensor container, label CSV files, and atomic file writes.
//!
//! Container layout:
//!
//! ```text
//! bytes 0..4   magic "UQTK"
//! byte  4      version (1)
//! byte  5      rank r in {1, 2, 3}
//! r x u64 LE   dims
//! payload      row-major f32 LE
//! ```
//!
//! Probabilities are held as `f64` in memory and narrowed to `f32` on save;
//! values that are already `f32`-representable (network outputs, weights)
//! round-trip bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Labels, Matrix, PassTensor, ProbMatrix, WeightVector};
use crate::error::{Result, UqError};

pub const MAGIC: &[u8; 4] = b"UQTK";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 6;

/// Decoded container contents before interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

/// A loaded tensor, typed by rank.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Weights(WeightVector),
    Probs(ProbMatrix),
    Passes(PassTensor),
}

pub fn encode(dims: &[usize], values: &[f32]) -> Vec<u8> {
    debug_assert!((1..=3).contains(&dims.len()));
    debug_assert_eq!(dims.iter().product::<usize>(), values.len());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * dims.len() + 4 * values.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], expected_rank: Option<u8>) -> Result<RawTensor> {
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(UqError::BadMagic {
            expected: "UQTK".into(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(UqError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = bytes[4];
    if version != VERSION {
        return Err(UqError::UnsupportedVersion(version));
    }
    let rank = bytes[5];
    if !(1..=3).contains(&rank) {
        return Err(UqError::InvalidArgument(format!("unsupported rank {rank}")));
    }
    if let Some(expected) = expected_rank {
        if rank != expected {
            return Err(UqError::RankMismatch {
                expected,
                found: rank,
            });
        }
    }
    let dims_end = HEADER_LEN + 8 * rank as usize;
    if bytes.len() < dims_end {
        return Err(UqError::Truncated {
            expected: dims_end,
            found: bytes.len(),
        });
    }
    let raw_dims: Vec<u64> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let count = raw_dims
        .iter()
        .try_fold(1usize, |acc, &d| {
            usize::try_from(d).ok().and_then(|d| acc.checked_mul(d))
        })
        .and_then(|c| c.checked_mul(4).map(|_| c))
        .ok_or_else(|| UqError::DimOverflow(raw_dims.clone()))?;
    let payload = &bytes[dims_end..];
    let needed = count * 4;
    if payload.len() < needed {
        return Err(UqError::Truncated {
            expected: dims_end + needed,
            found: bytes.len(),
        });
    }
    if payload.len() > needed {
        return Err(UqError::TrailingBytes(payload.len() - needed));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Ok(RawTensor {
        dims: raw_dims.iter().map(|&d| d as usize).collect(),
        values,
    })
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| UqError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(|e| UqError::io(tmp, e))?;
    f.write_all(bytes).map_err(|e| UqError::io(tmp, e))?;
    f.sync_all().map_err(|e| UqError::io(tmp, e))?;
    drop(f);
    fs::rename(tmp, path).map_err(|e| UqError::io(path, e))
}

pub fn read_raw(path: &Path, expected_rank: Option<u8>) -> Result<RawTensor> {
    let bytes = fs::read(path).map_err(|e| UqError::io(path, e))?;
    decode(&bytes, expected_rank)
}

fn widen(values: &[f32]) -> Vec<f64> {
    values.iter().map(|&v| f64::from(v)).collect()
}

fn narrow(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&v| v as f32).collect()
}

/// Loads a container and interprets it by rank: 1 → weights, 2 →
/// probability matrix, 3 → pass tensor.
pub fn load_tensor(path: &Path, expected_rank: u8) -> Result<Tensor> {
    let raw = read_raw(path, Some(expected_rank))?;
    let tag = path.display().to_string();
    match raw.dims.as_slice() {
        [_] => Ok(Tensor::Weights(WeightVector::new(raw.values, tag)?)),
        [_, c] => Ok(Tensor::Probs(ProbMatrix::new(*c, widen(&raw.values))?)),
        [t, n, c] => Ok(Tensor::Passes(PassTensor::new(*t, *n, *c, widen(&raw.values))?)),
        _ => unreachable!("rank validated by decode"),
    }
}

pub fn load_prob_matrix(path: &Path) -> Result<ProbMatrix> {
    match load_tensor(path, 2)? {
        Tensor::Probs(p) => Ok(p),
        _ => unreachable!(),
    }
}

pub fn load_pass_tensor(path: &Path) -> Result<PassTensor> {
    match load_tensor(path, 3)? {
        Tensor::Passes(p) => Ok(p),
        _ => unreachable!(),
    }
}

pub fn load_weights(path: &Path) -> Result<WeightVector> {
    match load_tensor(path, 1)? {
        Tensor::Weights(w) => Ok(w),
        _ => unreachable!(),
    }
}

/// Rank-2 container read as a plain feature matrix (no probability checks).
pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let raw = read_raw(path, Some(2))?;
    Matrix::new(raw.dims[0], raw.dims[1], raw.values)
}

pub fn save_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    match tensor {
        Tensor::Weights(w) => save_weights(path, w),
        Tensor::Probs(p) => save_prob_matrix(path, p),
        Tensor::Passes(p) => save_pass_tensor(path, p),
    }
}

pub fn save_prob_matrix(path: &Path, p: &ProbMatrix) -> Result<()> {
    write_atomic(path, &encode(&[p.n_samples(), p.n_classes()], &narrow(p.values())))
}

pub fn save_pass_tensor(path: &Path, p: &PassTensor) -> Result<()> {
    let dims = [p.n_passes(), p.n_samples(), p.n_classes()];
    write_atomic(path, &encode(&dims, &narrow(p.values())))
}

pub fn save_weights(path: &Path, w: &WeightVector) -> Result<()> {
    write_atomic(path, &encode(&[w.len()], w.values()))
}

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_atomic(path, &encode(&[m.rows(), m.cols()], m.values()))
}

/// Parses one non-negative integer per line; a leading `label` header and
/// blank lines are skipped.
pub fn parse_labels_csv(text: &str, source: &str) -> Result<Labels> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("label")) {
            continue;
        }
        let y = line.parse::<usize>().map_err(|e| UqError::Parse {
            path: source.to_string(),
            line: i + 1,
            msg: format!("{e}: {line:?}"),
        })?;
        out.push(y);
    }
    Ok(Labels::new(out))
}

pub fn load_labels_csv(path: &Path) -> Result<Labels> {
    let text = fs::read_to_string(path).map_err(|e| UqError::io(path, e))?;
    parse_labels_csv(&text, &path.display().to_string())
}

pub fn labels_to_csv(labels: &Labels) -> String {
    let mut s = String::from("label\n");
    for y in labels.as_slice() {
        s.push_str(&y.to_string());
        s.push('\n');
    }
    s
}

pub fn save_labels_csv(path: &Path, labels: &Labels) -> Result<()> {
    write_atomic(path, labels_to_csv(labels).as_bytes())
}
