//! Neural collapse measurements on a feature layer and its linear
//! classifier. Lower is more collapsed; every metric is zero at a simplex
//! equiangular tight frame with an aligned classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, pseudo_inverse, RealMatrix};
use crate::stats::{class_statistics, ClassStatistics, FeatureBank};

/// One measurement pass over all seven metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcReport {
    /// Within-class variability relative to between-class spread.
    pub nc1: f64,
    /// Coefficient of variation of centered class-mean norms.
    pub en_means: f64,
    /// Coefficient of variation of classifier row norms.
    pub en_classifier: f64,
    pub ea_means: f64,
    pub ea_classifier: f64,
    /// Self-duality gap between classifier rows and centered means.
    pub nc3: f64,
    /// Disagreement rate with the nearest-class-center rule.
    pub nc4_error: f64,
}

impl NcReport {
    pub const METRIC_NAMES: [&'static str; 7] = [
        "nc1",
        "en_means",
        "en_classifier",
        "ea_means",
        "ea_classifier",
        "nc3",
        "nc4_error",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.nc1,
            self.en_means,
            self.en_classifier,
            self.ea_means,
            self.ea_classifier,
            self.nc3,
            self.nc4_error,
        ]
    }

    pub fn named_values(&self) -> impl Iterator<Item = (&'static str, f64)> {
        Self::METRIC_NAMES.into_iter().zip(self.values())
    }

    pub fn max_value(&self) -> f64 {
        self.values().into_iter().fold(0.0, f64::max)
    }
}

/// `Tr(Σ_W Σ_B⁺) / C`
pub fn nc1(stats: &ClassStatistics, num_classes: usize) -> Result<f64> {
    let d = stats.within_cov.rows();
    if num_classes < 2 {
        return Err(Error::invalid("nc1 needs at least two classes"));
    }
    if stats.within_cov.shape() != (d, d) || stats.between_cov.shape() != (d, d) {
        return Err(Error::invalid(format!(
            "covariance shapes {:?} and {:?} are not a matching square pair",
            stats.within_cov.shape(),
            stats.between_cov.shape()
        )));
    }
    let between_pinv = pseudo_inverse(&stats.between_cov)?;
    Ok(stats.within_cov.matmul(&between_pinv).trace() / num_classes as f64)
}

fn centered_rows(vectors: &RealMatrix, center: Option<&[f64]>) -> Result<RealMatrix> {
    match center {
        Some(c) if c.len() != vectors.cols() => Err(Error::invalid(format!(
            "center has width {} but vectors have width {}",
            c.len(),
            vectors.cols()
        ))),
        Some(c) => Ok(vectors.center_rows(c)),
        None => Ok(vectors.clone()),
    }
}

/// Coefficient of variation (population std over mean) of the row norms of
/// `vectors − center`. `center = None` means the origin.
pub fn equinormality(vectors: &RealMatrix, center: Option<&[f64]>) -> Result<f64> {
    if vectors.rows() < 2 {
        return Err(Error::invalid("equinormality needs at least two vectors"));
    }
    let centered = centered_rows(vectors, center)?;
    let norms: Vec<f64> = centered.row_iter().map(norm).collect();
    let count = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / count;
    if mean == 0.0 {
        return Err(Error::degenerate("all centered vectors have zero norm"));
    }
    let var = norms.iter().map(|n| (n - mean).powi(2)).sum::<f64>() / count;
    Ok(var.sqrt() / mean)
}

/// Mean absolute deviation of pairwise cosines from the simplex value
/// `−1/(C−1)`, over the off-diagonal entries of the cosine Gram matrix.
pub fn equiangularity(vectors: &RealMatrix, center: Option<&[f64]>) -> Result<f64> {
    let c = vectors.rows();
    if c < 2 {
        return Err(Error::invalid("equiangularity needs at least two vectors"));
    }
    if vectors.cols() + 1 < c {
        return Err(Error::invalid(format!(
            "{c} vectors cannot be equiangular in {} dimensions",
            vectors.cols()
        )));
    }
    let units = unit_rows(&centered_rows(vectors, center)?)?;
    let target = -1.0 / (c as f64 - 1.0);
    let mut total = 0.0;
    for i in 0..c {
        for j in 0..c {
            if i != j {
                total += (dot(units.row(i), units.row(j)) - target).abs();
            }
        }
    }
    Ok(total / (c * (c - 1)) as f64)
}

fn unit_rows(m: &RealMatrix) -> Result<RealMatrix> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = norm(row);
        if n == 0.0 {
            return Err(Error::degenerate(format!("row {i} has zero norm")));
        }
        row.iter_mut().for_each(|x| *x /= n);
    }
    Ok(out)
}

/// Squared Frobenius distance between the row-normalized classifier and the
/// row-normalized centered class means.
pub fn self_duality(
    classifier: &RealMatrix,
    class_means: &RealMatrix,
    global_mean: &[f64],
) -> Result<f64> {
    if classifier.shape() != class_means.shape() || global_mean.len() != class_means.cols() {
        return Err(Error::invalid(format!(
            "classifier {:?}, class means {:?} and global mean width {} disagree",
            classifier.shape(),
            class_means.shape(),
            global_mean.len()
        )));
    }
    let w = unit_rows(classifier)?;
    let m = unit_rows(&class_means.center_rows(global_mean))?;
    Ok(w.sub(&m).frobenius_norm().powi(2))
}

/// Index of the nearest class mean; ties go to the smallest index.
pub fn nearest_class_mean(z: &[f64], class_means: &RealMatrix) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (c, mean) in class_means.row_iter().enumerate() {
        let dist: f64 = z.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist < best_dist {
            best = c;
            best_dist = dist;
        }
    }
    best
}

/// Fraction of samples whose nearest class mean is not their own class.
pub fn ncc_error(bank: &FeatureBank, stats: &ClassStatistics) -> Result<f64> {
    if stats.class_means.shape() != (bank.num_classes(), bank.dim()) {
        return Err(Error::invalid("statistics do not match the feature bank"));
    }
    let wrong = bank
        .features()
        .row_iter()
        .zip(bank.labels())
        .filter(|(z, &y)| nearest_class_mean(z, &stats.class_means) != y)
        .count();
    Ok(wrong as f64 / bank.len() as f64)
}

/// All seven metrics from one pass of class statistics.
pub fn nc_report(bank: &FeatureBank, classifier: &RealMatrix) -> Result<NcReport> {
    let c = bank.num_classes();
    if classifier.shape() != (c, bank.dim()) {
        return Err(Error::invalid(format!(
            "classifier shape {:?} does not match {c} classes of width {}",
            classifier.shape(),
            bank.dim()
        )));
    }
    let stats = class_statistics(bank)?;
    let g = Some(stats.global_mean.as_slice());
    Ok(NcReport {
        nc1: nc1(&stats, c)?,
        en_means: equinormality(&stats.class_means, g)?,
        en_classifier: equinormality(classifier, None)?,
        ea_means: equiangularity(&stats.class_means, g)?,
        ea_classifier: equiangularity(classifier, None)?,
        nc3: self_duality(classifier, &stats.class_means, &stats.global_mean)?,
        nc4_error: ncc_error(bank, &stats)?,
    })
}

/// Vertices of the centered simplex equiangular tight frame as the rows of
/// `√(C/(C−1)) · (I − 𝟙𝟙ᵀ/C)`: unit norm, pairwise cosine `−1/(C−1)`.
pub fn simplex_etf(num_classes: usize) -> RealMatrix {
    let c = num_classes as f64;
    let scale = (c / (c - 1.0)).sqrt();
    RealMatrix::from_fn(num_classes, num_classes, |i, j| {
        scale * (if i == j { 1.0 } else { 0.0 } - 1.0 / c)
    })
}
