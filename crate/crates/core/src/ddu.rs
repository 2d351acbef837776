//! Class-conditional Gaussian mixture density over feature (or logit) space.
//!
//! Parameters come straight from labeled statistics in one pass over the
//! training set: per-class mean, per-class maximum-likelihood covariance and
//! empirical class priors. Inputs are scored by `log q(z)`; higher means
//! more in-distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, cholesky, RealMatrix};
use crate::stats::FeatureBank;

/// Diagonal jitters tried in order until every class covariance factors.
pub const JITTER_LADDER: [f64; 13] = [
    0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceTag {
    FeatureSpace,
    LogitSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureDensity {
    class_means: RealMatrix,
    class_covariances: Vec<RealMatrix>,
    class_log_priors: Vec<f64>,
    jitter: f64,
    space_tag: SpaceTag,
    // lower Cholesky factors of Σ_y + jitter·I and their log-determinants
    factors: Vec<RealMatrix>,
    log_dets: Vec<f64>,
}

fn factor_all(covs: &[RealMatrix], jitter: f64) -> Option<(Vec<RealMatrix>, Vec<f64>)> {
    let mut factors = Vec::with_capacity(covs.len());
    let mut log_dets = Vec::with_capacity(covs.len());
    for cov in covs {
        let mut jittered = cov.clone();
        for i in 0..jittered.rows() {
            jittered[(i, i)] += jitter;
        }
        let l = cholesky(&jittered)?;
        let log_det = 2.0 * (0..l.rows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        if !log_det.is_finite() {
            return None;
        }
        factors.push(l);
        log_dets.push(log_det);
    }
    Some((factors, log_dets))
}

pub fn fit_gmm(bank: &FeatureBank, space_tag: SpaceTag) -> Result<GaussianMixtureDensity> {
    let c = bank.num_classes();
    let d = bank.dim();
    let counts = bank.class_counts();
    if let Some(k) = counts.iter().position(|&n| n < 2) {
        return Err(Error::invalid(format!(
            "class {k} has {} samples; the mixture needs at least 2 per class",
            counts[k]
        )));
    }
    let mut means = RealMatrix::zeros(c, d);
    for (row, &y) in bank.features().row_iter().zip(bank.labels()) {
        axpy(1.0, row, means.row_mut(y));
    }
    for (k, &n) in counts.iter().enumerate() {
        means.row_mut(k).iter_mut().for_each(|v| *v /= n as f64);
    }
    let mut covs = vec![RealMatrix::zeros(d, d); c];
    let mut diff = vec![0.0; d];
    for (row, &y) in bank.features().row_iter().zip(bank.labels()) {
        for ((o, a), m) in diff.iter_mut().zip(row).zip(means.row(y)) {
            *o = a - m;
        }
        let cov = &mut covs[y];
        for (i, &di) in diff.iter().enumerate() {
            axpy(di, &diff, cov.row_mut(i));
        }
    }
    for (cov, &n) in covs.iter_mut().zip(&counts) {
        *cov = cov.scaled(1.0 / n as f64);
    }
    let total = bank.len() as f64;
    let log_priors = counts.iter().map(|&n| (n as f64 / total).ln()).collect();

    for jitter in JITTER_LADDER {
        if let Some((factors, log_dets)) = factor_all(&covs, jitter) {
            return Ok(GaussianMixtureDensity {
                class_means: means,
                class_covariances: covs,
                class_log_priors: log_priors,
                jitter,
                space_tag,
                factors,
                log_dets,
            });
        }
    }
    Err(Error::FitFailed(
        "no jitter up to 1e-1 makes every class covariance positive definite".into(),
    ))
}

/// `log Σ exp(xᵢ)` with the maximum factored out.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl GaussianMixtureDensity {
    /// Builds a mixture from explicit parameters; priors are given as
    /// probabilities and must sum to one.
    pub fn from_parameters(
        class_means: RealMatrix,
        class_covariances: Vec<RealMatrix>,
        priors: &[f64],
        jitter: f64,
        space_tag: SpaceTag,
    ) -> Result<Self> {
        let c = class_means.rows();
        let d = class_means.cols();
        if class_covariances.len() != c || priors.len() != c || c == 0 {
            return Err(Error::invalid("component counts disagree"));
        }
        if class_covariances.iter().any(|s| s.shape() != (d, d)) {
            return Err(Error::invalid("covariance shape does not match mean width"));
        }
        if priors.iter().any(|&p| !(p > 0.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("priors must be positive and sum to one"));
        }
        if !(jitter >= 0.0) {
            return Err(Error::invalid("jitter must be nonnegative"));
        }
        let (factors, log_dets) = factor_all(&class_covariances, jitter)
            .ok_or_else(|| Error::FitFailed("a covariance is not positive definite".into()))?;
        Ok(Self {
            class_means,
            class_covariances,
            class_log_priors: priors.iter().map(|p| p.ln()).collect(),
            jitter,
            space_tag,
            factors,
            log_dets,
        })
    }

    pub fn num_components(&self) -> usize {
        self.class_means.rows()
    }

    pub fn dim(&self) -> usize {
        self.class_means.cols()
    }

    pub fn class_means(&self) -> &RealMatrix {
        &self.class_means
    }

    pub fn class_covariances(&self) -> &[RealMatrix] {
        &self.class_covariances
    }

    pub fn class_log_priors(&self) -> &[f64] {
        &self.class_log_priors
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn space_tag(&self) -> SpaceTag {
        self.space_tag
    }

    /// `log N(z; μ_y, Σ_y + jitter·I)` via a triangular solve.
    pub fn component_log_density(&self, y: usize, z: &[f64]) -> f64 {
        let l = &self.factors[y];
        let d = z.len();
        let mut w = vec![0.0; d];
        for i in 0..d {
            let mut acc = z[i] - self.class_means[(y, i)];
            for (lij, wj) in l.row(i)[..i].iter().zip(&w[..i]) {
                acc -= lij * wj;
            }
            w[i] = acc / l[(i, i)];
        }
        let maha: f64 = w.iter().map(|x| x * x).sum();
        -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + self.log_dets[y] + maha)
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::invalid(format!(
                "query width {} but the mixture has width {}",
                z.len(),
                self.dim()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite query"));
        }
        let terms: Vec<f64> = (0..self.num_components())
            .map(|y| self.component_log_density(y, z) + self.class_log_priors[y])
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// Scores every row.
    pub fn score(&self, rows: &RealMatrix) -> Result<Vec<f64>> {
        rows.row_iter().map(|r| self.log_density(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GmmDocument {
            space_tag: self.space_tag,
            jitter: self.jitter,
            log_priors: self.class_log_priors.clone(),
            means: self.class_means.row_iter().map(<[f64]>::to_vec).collect(),
            covariances: self
                .class_covariances
                .iter()
                .map(|s| s.row_iter().map(<[f64]>::to_vec).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GmmDocument =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let means = RealMatrix::from_rows(&doc.means)?;
        let covs = doc
            .covariances
            .iter()
            .map(|s| RealMatrix::from_rows(s))
            .collect::<Result<Vec<_>>>()?;
        let c = means.rows();
        if covs.len() != c || doc.log_priors.len() != c || c == 0 {
            return Err(Error::Format("component counts disagree".into()));
        }
        if covs.iter().any(|s| s.shape() != (means.cols(), means.cols())) {
            return Err(Error::Format("covariance shape does not match mean width".into()));
        }
        let (factors, log_dets) = factor_all(&covs, doc.jitter)
            .ok_or_else(|| Error::Format("stored covariance is not positive definite".into()))?;
        Ok(Self {
            class_means: means,
            class_covariances: covs,
            class_log_priors: doc.log_priors,
            jitter: doc.jitter,
            space_tag: doc.space_tag,
            factors,
            log_dets,
        })
    }
}

/// On-disk JSON layout. Reals are written in shortest round-trip decimal
/// form, which reproduces every `f64` exactly.
#[derive(Serialize, Deserialize)]
struct GmmDocument {
    space_tag: SpaceTag,
    jitter: f64,
    log_priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
}
