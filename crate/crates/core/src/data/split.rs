//! Seeded train/calibration/test splits and k-fold partitions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::rng;

/// Disjoint train/calibration/test index sets.
///
/// Conceptually the population is permuted into `[train | cal | test]`; `v`
/// is the position where the test block starts, so the test slice is
/// `v..n` of that permutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_idx: Vec<usize>,
    pub cal_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub v: usize,
}

// Guards floor(ratio * n) against products like 1999.9999999.
fn block_size(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-7).floor() as usize
}

/// Shuffles `0..n` with `seed` and cuts it into train, calibration and test
/// blocks. Calibration and test get `floor(ratio * n)` samples; training
/// gets the remainder. Each index set is returned in ascending order.
pub fn split_dataset(
    n: usize,
    train_ratio: f64,
    cal_ratio: f64,
    test_ratio: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if n < 3 {
        return Err(UqError::InvalidArgument(format!(
            "need at least 3 samples to split, got {n}"
        )));
    }
    let ratios = [train_ratio, cal_ratio, test_ratio];
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(UqError::InvalidArgument(format!(
            "split ratios must be non-negative, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(UqError::InvalidArgument(format!(
            "split ratios sum to {total}, expected 1"
        )));
    }

    let n_cal = block_size(cal_ratio, n);
    let n_test = block_size(test_ratio, n).min(n - n_cal);
    let n_train = n - n_cal - n_test;

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::substream(seed, rng::purpose::SPLIT));

    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(DatasetSplit {
        train_idx: sorted(&perm[..n_train]),
        cal_idx: sorted(&perm[n_train..n_train + n_cal]),
        test_idx: sorted(&perm[n_train + n_cal..]),
        v: n_train + n_cal,
    })
}

/// Convenience wrapper taking absolute calibration and test sizes.
pub fn split_by_counts(n: usize, n_cal: usize, n_test: usize, seed: u64) -> Result<DatasetSplit> {
    if n_cal + n_test > n {
        return Err(UqError::InvalidArgument(format!(
            "calibration ({n_cal}) + test ({n_test}) exceed population {n}"
        )));
    }
    let nf = n as f64;
    let cal = n_cal as f64 / nf;
    let test = n_test as f64 / nf;
    split_dataset(n, 1.0 - cal - test, cal, test, seed)
}

/// `k` (train, validation) index pairs whose validation folds partition
/// `0..n`. Fold sizes differ by at most one; the first `n % k` folds carry
/// the extra sample.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n {
        return Err(UqError::InvalidArgument(format!(
            "k-fold needs 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::substream(seed, rng::purpose::SPLIT));

    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut val = perm[start..start + len].to_vec();
        val.sort_unstable();
        let mut train: Vec<usize> = perm[..start]
            .iter()
            .chain(&perm[start + len..])
            .copied()
            .collect();
        train.sort_unstable();
        folds.push((train, val));
        start += len;
    }
    Ok(folds)
}
