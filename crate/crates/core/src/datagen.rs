//! Synthetic in-distribution clusters and out-of-distribution probes.
//!
//! Class means sit on a scaled simplex equiangular tight frame, so class
//! separation is controlled by one number regardless of `input_dim`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, RealMatrix};
use crate::metrics::simplex_etf;
use crate::rng::Stream;
use crate::stats::FeatureBank;

/// How out-of-distribution probes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OodKind {
    /// Every coordinate uniform on `[low, high]`.
    UniformBox { low: f64, high: f64 },
    /// Copies of the class clusters displaced by `shift` along a direction
    /// orthogonal to the span of the class means (radially outward when the
    /// input has no spare dimension).
    ShiftedClusters { shift: f64 },
    /// Uniform on the sphere of the given radius about the origin.
    IsotropicShell { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    pub cluster_spread: f64,
    pub class_separation: f64,
    pub ood_kind: OodKind,
    pub ood_samples: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if self.input_dim + 1 < self.num_classes {
            return Err(Error::invalid(format!(
                "input_dim {} cannot hold {} separable class means",
                self.input_dim, self.num_classes
            )));
        }
        if self.samples_per_class == 0 || self.ood_samples == 0 {
            return Err(Error::invalid("sample counts must be positive"));
        }
        if !(self.cluster_spread > 0.0 && self.class_separation > 0.0) {
            return Err(Error::invalid("spread and separation must be positive"));
        }
        Ok(())
    }

    /// Class means: `class_separation` × unit simplex vertices expressed in
    /// an orthonormal basis of their `(C−1)`-dimensional span, zero-padded.
    pub fn class_means(&self) -> RealMatrix {
        let c = self.num_classes;
        let etf = simplex_etf(c);
        let basis = helmert_basis(c);
        let mut means = RealMatrix::zeros(c, self.input_dim);
        for i in 0..c {
            for k in 0..c - 1 {
                let coord: f64 = etf.row(i).iter().zip(basis.row(k)).map(|(a, b)| a * b).sum();
                means[(i, k)] = self.class_separation * coord;
            }
        }
        means
    }
}

/// Rows are an orthonormal basis of the sum-zero subspace of ℝᶜ.
fn helmert_basis(c: usize) -> RealMatrix {
    let mut b = RealMatrix::zeros(c - 1, c);
    for k in 1..c {
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for j in 0..k {
            b[(k - 1, j)] = scale;
        }
        b[(k - 1, k)] = -(k as f64) * scale;
    }
    b
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: FeatureBank,
    pub id_test: FeatureBank,
    /// Unlabeled probes.
    pub ood_test: RealMatrix,
    pub class_means: RealMatrix,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let means = spec.class_means();
    Ok(SyntheticData {
        train: labeled_clusters(spec, &means, "train")?,
        id_test: labeled_clusters(spec, &means, "id_test")?,
        ood_test: generate_ood(spec, &means),
        class_means: means,
    })
}

fn labeled_clusters(spec: &SyntheticSpec, means: &RealMatrix, tag: &str) -> Result<FeatureBank> {
    let mut rng = Stream::derive(spec.seed, tag);
    let n = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * spec.input_dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.num_classes {
        for _ in 0..spec.samples_per_class {
            data.extend(
                means
                    .row(c)
                    .iter()
                    .map(|m| m + spec.cluster_spread * rng.standard_normal()),
            );
            labels.push(c);
        }
    }
    FeatureBank::new(RealMatrix::new(n, spec.input_dim, data)?, labels, spec.num_classes)
}

/// Draws only the out-of-distribution probes; equal to
/// `generate(spec).ood_test`.
pub fn generate_ood(spec: &SyntheticSpec, means: &RealMatrix) -> RealMatrix {
    let mut rng = Stream::derive(spec.seed, "ood_test");
    let d = spec.input_dim;
    let mut out = RealMatrix::zeros(spec.ood_samples, d);
    for i in 0..spec.ood_samples {
        let row = out.row_mut(i);
        match spec.ood_kind {
            OodKind::UniformBox { low, high } => {
                row.iter_mut().for_each(|x| *x = rng.uniform_range(low, high));
            }
            OodKind::ShiftedClusters { shift } => {
                let c = rng.below(spec.num_classes);
                let mean = means.row(c);
                let spare_axis = spec.num_classes - 1;
                let mut dir = vec![0.0; d];
                if spare_axis < d {
                    dir[spare_axis] = 1.0;
                } else {
                    let n = norm(mean);
                    dir.iter_mut().zip(mean).for_each(|(o, m)| *o = m / n);
                }
                for ((x, m), u) in row.iter_mut().zip(mean).zip(&dir) {
                    *x = m + shift * u + spec.cluster_spread * rng.standard_normal();
                }
            }
            OodKind::IsotropicShell { radius } => {
                row.iter_mut().for_each(|x| *x = rng.standard_normal());
                let n = norm(row).max(f64::MIN_POSITIVE);
                row.iter_mut().for_each(|x| *x *= radius / n);
            }
        }
    }
    out
}
