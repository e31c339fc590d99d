//! Gaussian blob datasets for end-to-end runs without external data.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Labels, Matrix};
use crate::rng::{self, purpose};

/// Isotropic 2-D Gaussian blobs whose centers form a regular polygon with
/// side length `center_distance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n_samples: usize,
    pub n_classes: usize,
    pub center_distance: f64,
    pub sigma: f64,
}

impl BlobSpec {
    /// Three well-separated classes (centers 4 apart, sigma 0.3).
    pub fn separable(n_samples: usize) -> Self {
        Self {
            n_samples,
            n_classes: 3,
            center_distance: 4.0,
            sigma: 0.3,
        }
    }

    /// Three heavily overlapping classes (centers 1 apart, sigma 0.5).
    pub fn overlapping(n_samples: usize) -> Self {
        Self {
            n_samples,
            n_classes: 3,
            center_distance: 1.0,
            sigma: 0.5,
        }
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        let c = self.n_classes as f64;
        let radius = self.center_distance / (2.0 * (std::f64::consts::PI / c).sin());
        (0..self.n_classes)
            .map(|k| {
                let angle = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / c;
                [radius * angle.cos(), radius * angle.sin()]
            })
            .collect()
    }
}

/// Sample `i` belongs to class `i % n_classes`.
pub fn blobs(spec: &BlobSpec, seed: u64) -> (Matrix, Labels) {
    let centers = spec.centers();
    let mut rng = rng::substream(seed, purpose::SYNTHETIC);
    let mut values = Vec::with_capacity(spec.n_samples * 2);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let k = i % spec.n_classes;
        for center in centers[k] {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push((center + spec.sigma * z) as f32);
        }
        labels.push(k);
    }
    (
        Matrix::new(spec.n_samples, 2, values).expect("shape by construction"),
        Labels::new(labels),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_have_requested_spacing() {
        let c = BlobSpec::separable(0).centers();
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            let d = ((c[a][0] - c[b][0]).powi(2) + (c[a][1] - c[b][1]).powi(2)).sqrt();
            assert!((d - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_balanced() {
        let (x1, y1) = blobs(&BlobSpec::overlapping(30), 5);
        let (x2, y2) = blobs(&BlobSpec::overlapping(30), 5);
        assert_eq!((x1.clone(), y1.clone()), (x2, y2));
        assert_eq!(y1.as_slice().iter().filter(|&&y| y == 2).count(), 10);
        assert_ne!(x1, blobs(&BlobSpec::overlapping(30), 6).0);
    }
}
