//! Labeled feature banks and the first/second-order class statistics every
//! collapse metric is built from.

use crate::error::{Error, Result};
use crate::linalg::{axpy, RealMatrix};

/// `N` feature vectors (one per row) with class labels in `[0, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    features: RealMatrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl FeatureBank {
    /// Validates label count, label range and that every class occurs.
    pub fn new(features: RealMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::invalid(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        let counts = count_labels(&labels, num_classes);
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(c));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &RealMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        count_labels(&self.labels, self.num_classes)
    }

    /// Same labels, different feature matrix (e.g. the same samples after a
    /// forward pass).
    pub fn with_features(&self, features: RealMatrix) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.num_classes)
    }

    pub fn into_parts(self) -> (RealMatrix, Vec<usize>, usize) {
        (self.features, self.labels, self.num_classes)
    }
}

pub(crate) fn count_labels(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l < num_classes {
            counts[l] += 1;
        }
    }
    counts
}

/// Class means, mean of class means, and within/between-class covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStatistics {
    /// `C × d`, row `c` is the mean of class `c`.
    pub class_means: RealMatrix,
    /// Unweighted mean of the class means.
    pub global_mean: Vec<f64>,
    /// `(1/N) Σᵢ (zᵢ − u_{yᵢ})(zᵢ − u_{yᵢ})ᵀ`
    pub within_cov: RealMatrix,
    /// `(1/C) Σ_c (u_c − u_G)(u_c − u_G)ᵀ`
    pub between_cov: RealMatrix,
    pub class_counts: Vec<usize>,
}

impl ClassStatistics {
    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    /// Class means minus the global mean.
    pub fn centered_means(&self) -> RealMatrix {
        self.class_means.center_rows(&self.global_mean)
    }
}

pub fn class_statistics(bank: &FeatureBank) -> Result<ClassStatistics> {
    let c = bank.num_classes();
    let d = bank.dim();
    let z = bank.features();
    let counts = bank.class_counts();
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(empty));
    }

    let mut means = RealMatrix::zeros(c, d);
    for (row, &y) in z.row_iter().zip(bank.labels()) {
        axpy(1.0, row, means.row_mut(y));
    }
    for (k, &n) in counts.iter().enumerate() {
        means.row_mut(k).iter_mut().for_each(|v| *v /= n as f64);
    }
    let global_mean = means.column_mean();

    let mut within = RealMatrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (row, &y) in z.row_iter().zip(bank.labels()) {
        for ((o, a), b) in diff.iter_mut().zip(row).zip(means.row(y)) {
            *o = a - b;
        }
        add_outer(&mut within, &diff, 1.0);
    }
    let within = within.scaled(1.0 / bank.len() as f64);

    let centered = means.center_rows(&global_mean);
    let between = centered.t_matmul(&centered).scaled(1.0 / c as f64);

    Ok(ClassStatistics {
        class_means: means,
        global_mean,
        within_cov: symmetrize(&within),
        between_cov: symmetrize(&between),
        class_counts: counts,
    })
}

fn add_outer(m: &mut RealMatrix, v: &[f64], s: f64) {
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        axpy(s * vi, v, m.row_mut(i));
    }
}

fn symmetrize(m: &RealMatrix) -> RealMatrix {
    RealMatrix::from_fn(m.rows(), m.cols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}
