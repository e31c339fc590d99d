//! Global-magnitude sparsity diagnostics.
//!
//! A single cutoff `t` applies to every parameter: a weight counts as
//! prunable when `|w| < t` (strict, so weights exactly at the cutoff
//! survive). Weights are only counted, never modified.

use serde::{Deserialize, Serialize};

use crate::data::WeightVector;
use crate::error::{Result, UqError};

/// Range boundaries of the default report: `<1e-5, 1e-5..5e-5, ... , >=5e-3`.
pub const DEFAULT_BOUNDARIES: [f64; 6] = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3];

fn magnitudes(weights: &WeightVector) -> impl Iterator<Item = f64> + '_ {
    weights.values().iter().map(|w| f64::from(w.abs()))
}

/// Fraction of weights with `|w| < t`.
pub fn sparsity_at_threshold(weights: &WeightVector, t: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(UqError::InvalidArgument(format!("threshold must be > 0, got {t}")));
    }
    if weights.is_empty() {
        return Err(UqError::Empty("weight vector"));
    }
    let below = magnitudes(weights).filter(|&m| m < t).count();
    Ok(below as f64 / weights.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityRange {
    /// Inclusive lower edge (0 for the first range).
    pub lo: f64,
    /// Exclusive upper edge; `None` for the open final range.
    pub hi: Option<f64>,
    pub count: usize,
    pub percent: f64,
    pub cumulative_percent: f64,
}

impl SparsityRange {
    /// Human-readable range label, e.g. `0.00001-0.00005` or `>=0.005`.
    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) if self.lo == 0.0 => format!("<{}", fmt_edge(hi)),
            Some(hi) => format!("{}-{}", fmt_edge(self.lo), fmt_edge(hi)),
            None => format!(">={}", fmt_edge(self.lo)),
        }
    }
}

fn fmt_edge(x: f64) -> String {
    // Plain decimal, never exponent notation.
    let s = format!("{x:.12}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Counts of weights per magnitude range, with percent and cumulative
/// percent of the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityProfile {
    pub boundaries: Vec<f64>,
    pub ranges: Vec<SparsityRange>,
    pub total: usize,
}

impl SparsityProfile {
    /// CSV with columns `range,count,percent,cumulative_percent`; percents
    /// rounded to two decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("range,count,percent,cumulative_percent\n");
        for r in &self.ranges {
            s.push_str(&format!(
                "{},{},{:.2},{:.2}\n",
                r.label(),
                r.count,
                r.percent,
                r.cumulative_percent
            ));
        }
        s
    }
}

/// Range `r` counts `|w|` in `[b_{r-1}, b_r)` with `b_{-1} = 0`; the last
/// range is `[b_last, inf)`.
pub fn sparsity_profile(weights: &WeightVector, boundaries: &[f64]) -> Result<SparsityProfile> {
    if boundaries.is_empty() {
        return Err(UqError::InvalidArgument("at least one boundary required".into()));
    }
    if boundaries[0] <= 0.0 || !boundaries.iter().all(|b| b.is_finite()) {
        return Err(UqError::InvalidArgument(format!(
            "boundaries must be positive and finite: {boundaries:?}"
        )));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(UqError::InvalidArgument(format!(
            "boundaries must be strictly ascending: {boundaries:?}"
        )));
    }
    if weights.is_empty() {
        return Err(UqError::Empty("weight vector"));
    }
    let mut counts = vec![0usize; boundaries.len() + 1];
    for m in magnitudes(weights) {
        // Number of boundaries <= m is the range index.
        let r = boundaries.partition_point(|&b| b <= m);
        counts[r] += 1;
    }
    let total = weights.len();
    let mut cum = 0usize;
    let ranges = counts
        .iter()
        .enumerate()
        .map(|(r, &count)| {
            cum += count;
            SparsityRange {
                lo: if r == 0 { 0.0 } else { boundaries[r - 1] },
                hi: boundaries.get(r).copied(),
                count,
                percent: 100.0 * count as f64 / total as f64,
                cumulative_percent: 100.0 * cum as f64 / total as f64,
            }
        })
        .collect();
    Ok(SparsityProfile {
        boundaries: boundaries.to_vec(),
        ranges,
        total,
    })
}

/// Smallest cutoff from `{0} ∪ {|w|} ∪ {max|w|·(1+ε)}` whose sparsity is at
/// least `kappa`, with the sparsity actually achieved (ties can overshoot).
pub fn threshold_for_target_sparsity(weights: &WeightVector, kappa: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(UqError::InvalidArgument(format!("kappa must lie in [0, 1], got {kappa}")));
    }
    if weights.is_empty() {
        return Err(UqError::Empty("weight vector"));
    }
    let w = weights.len() as f64;
    if kappa == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut mags: Vec<f64> = magnitudes(weights).collect();
    mags.sort_by(f64::total_cmp);
    // Candidate mags[j] (first of its tie run) has exactly j weights below it.
    for j in 0..mags.len() {
        if j > 0 && mags[j] == mags[j - 1] {
            continue;
        }
        let achieved = j as f64 / w;
        if achieved >= kappa && mags[j] > 0.0 {
            return Ok((mags[j], achieved));
        }
    }
    let max = mags[mags.len() - 1];
    let t = if max > 0.0 { max * (1.0 + 1e-9) } else { f64::MIN_POSITIVE };
    Ok((t, 1.0))
}
