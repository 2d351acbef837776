//! Training objectives and their exact gradients.
//!
//! The collapse loss is the unweighted sum of the six differentiable collapse
//! metrics evaluated on batch statistics. Its gradient is written out by hand:
//! class means and the global mean are linear in the features, the
//! covariances are quadratic, and the pseudoinverse is differentiated under
//! the constant-rank assumption, which holds for batch covariances away from
//! measure-zero configurations.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, pseudo_inverse, RealMatrix};
use crate::metrics::{equiangularity, equinormality, nc1, self_duality};
use crate::stats::{class_statistics, count_labels, FeatureBank};

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &RealMatrix) -> RealMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row.iter_mut().for_each(|x| *x /= sum);
    }
    out
}

fn check_labels(logits: &RealMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::invalid(format!("label {l} out of range")));
    }
    Ok(())
}

/// Mean negative log-likelihood of the labels under the row softmax.
pub fn cross_entropy(logits: &RealMatrix, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let total: f64 = logits
        .row_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Loss and `∂loss/∂logits`.
pub fn cross_entropy_grad(logits: &RealMatrix, labels: &[usize]) -> Result<(f64, RealMatrix)> {
    let loss = cross_entropy(logits, labels)?;
    let mut grad = softmax(logits);
    let scale = 1.0 / labels.len() as f64;
    for (i, &y) in labels.iter().enumerate() {
        grad[(i, y)] -= 1.0;
        grad.row_mut(i).iter_mut().for_each(|g| *g *= scale);
    }
    Ok((loss, grad))
}

/// `NC1 + EN_means + EN_classifier + EA_means + EA_classifier + NC3` on the
/// batch. Every class must appear in the batch.
pub fn nc_loss(features: &RealMatrix, labels: &[usize], classifier: &RealMatrix) -> Result<f64> {
    let c = classifier.rows();
    let bank = FeatureBank::new(features.clone(), labels.to_vec(), c)?;
    if classifier.cols() != bank.dim() {
        return Err(Error::invalid("classifier width does not match features"));
    }
    let stats = class_statistics(&bank)?;
    let g = Some(stats.global_mean.as_slice());
    Ok(nc1(&stats, c)?
        + equinormality(&stats.class_means, g)?
        + equinormality(classifier, None)?
        + equiangularity(&stats.class_means, g)?
        + equiangularity(classifier, None)?
        + self_duality(classifier, &stats.class_means, &stats.global_mean)?)
}

/// Collapse loss with its gradients.
#[derive(Debug, Clone)]
pub struct NcLossGrad {
    pub loss: f64,
    /// `∂loss/∂features`, `B × d`.
    pub d_features: RealMatrix,
    /// `∂loss/∂classifier`, `C × d`.
    pub d_classifier: RealMatrix,
}

pub fn nc_loss_grad(
    features: &RealMatrix,
    labels: &[usize],
    classifier: &RealMatrix,
) -> Result<NcLossGrad> {
    let c = classifier.rows();
    let bank = FeatureBank::new(features.clone(), labels.to_vec(), c)?;
    let d = bank.dim();
    let b = bank.len();
    if classifier.cols() != d {
        return Err(Error::invalid("classifier width does not match features"));
    }
    if c < 2 || d + 1 < c {
        return Err(Error::invalid("need 2 <= C <= d + 1 for the collapse loss"));
    }
    let stats = class_statistics(&bank)?;
    let counts = count_labels(labels, c);
    let g = &stats.global_mean;

    // residuals to own class mean
    let mut resid = features.clone();
    for (i, &y) in labels.iter().enumerate() {
        axpy(-1.0, stats.class_means.row(y), resid.row_mut(i));
    }
    let centered = stats.class_means.center_rows(g);

    // NC1 = tr(S P) / C with S = Σ_W, A = Σ_B, P = A⁺
    let s = &stats.within_cov;
    let a = &stats.between_cov;
    let p = pseudo_inverse(a)?;
    let cf = c as f64;
    let nc1_value = s.matmul(&p).trace() / cf;
    let d_within = p.scaled(1.0 / cf);
    let q = RealMatrix::identity(d).sub(&a.matmul(&p));
    let psp = p.matmul(s).matmul(&p);
    let pps_q = p.matmul(&p).matmul(s).matmul(&q);
    let qspp = q.matmul(s).matmul(&p).matmul(&p);
    let d_between = pps_q.add(&qspp).sub(&psp).scaled(1.0 / cf);

    let mut d_z = resid.matmul(&d_within).scaled(2.0 / b as f64);
    let mut d_means = RealMatrix::zeros(c, d);
    for (i, &y) in labels.iter().enumerate() {
        axpy(-1.0, d_z.row(i), d_means.row_mut(y));
    }
    // gradient w.r.t. the centered means, collected from NC1 and the
    // mean-side NC2/NC3 terms, then pushed through the centering
    let mut d_centered = centered.matmul(&d_between).scaled(2.0 / cf);

    let (en_means, d_en) = equinormality_grad(&centered)?;
    d_centered.add_scaled_in_place(1.0, &d_en);
    let (ea_means, d_ea) = equiangularity_grad(&centered)?;
    d_centered.add_scaled_in_place(1.0, &d_ea);

    let (en_cls, d_classifier_en) = equinormality_grad(classifier)?;
    let (ea_cls, d_classifier_ea) = equiangularity_grad(classifier)?;
    let (nc3, d_classifier_nc3, d_centered_nc3) = self_duality_grad(classifier, &centered)?;
    d_centered.add_scaled_in_place(1.0, &d_centered_nc3);

    // centered = means − mean(means): project out the row average
    let avg = d_centered.column_mean();
    d_means.add_scaled_in_place(1.0, &d_centered.center_rows(&avg));

    for (i, &y) in labels.iter().enumerate() {
        axpy(1.0 / counts[y] as f64, d_means.row(y), d_z.row_mut(i));
    }

    let d_classifier = d_classifier_en.add(&d_classifier_ea).add(&d_classifier_nc3);
    Ok(NcLossGrad {
        loss: nc1_value + en_means + en_cls + ea_means + ea_cls + nc3,
        d_features: d_z,
        d_classifier,
    })
}

/// Coefficient of variation of row norms and its gradient w.r.t. the rows.
fn equinormality_grad(v: &RealMatrix) -> Result<(f64, RealMatrix)> {
    let c = v.rows() as f64;
    let norms: Vec<f64> = v.row_iter().map(norm).collect();
    let mean = norms.iter().sum::<f64>() / c;
    if mean == 0.0 {
        return Err(Error::degenerate("all vectors have zero norm"));
    }
    let std = (norms.iter().map(|n| (n - mean).powi(2)).sum::<f64>() / c).sqrt();
    let value = std / mean;
    let mut grad = RealMatrix::zeros(v.rows(), v.cols());
    for (k, &r) in norms.iter().enumerate() {
        let d_std = if std > 0.0 { (r - mean) / (c * std) } else { 0.0 };
        let d_r = d_std / mean - std / (mean * mean * c);
        if r > 0.0 {
            axpy(d_r / r, v.row(k), grad.row_mut(k));
        }
    }
    Ok((value, grad))
}

fn unit_rows(v: &RealMatrix) -> Result<(RealMatrix, Vec<f64>)> {
    let mut units = v.clone();
    let mut norms = Vec::with_capacity(v.rows());
    for i in 0..v.rows() {
        let row = units.row_mut(i);
        let n = norm(row);
        if n == 0.0 {
            return Err(Error::degenerate(format!("row {i} has zero norm")));
        }
        row.iter_mut().for_each(|x| *x /= n);
        norms.push(n);
    }
    Ok((units, norms))
}

/// Pulls a gradient w.r.t. unit rows back to the unnormalized rows.
fn unit_rows_backward(units: &RealMatrix, norms: &[f64], d_units: &RealMatrix) -> RealMatrix {
    let mut out = d_units.clone();
    for (i, &n) in norms.iter().enumerate() {
        let u = units.row(i);
        let g = out.row_mut(i);
        let proj = dot(u, g);
        for (gi, ui) in g.iter_mut().zip(u) {
            *gi = (*gi - ui * proj) / n;
        }
    }
    out
}

fn equiangularity_grad(v: &RealMatrix) -> Result<(f64, RealMatrix)> {
    let c = v.rows();
    let (units, norms) = unit_rows(v)?;
    let target = -1.0 / (c as f64 - 1.0);
    let denom = (c * (c - 1)) as f64;
    let mut value = 0.0;
    let mut d_units = RealMatrix::zeros(c, v.cols());
    for i in 0..c {
        for j in 0..c {
            if i == j {
                continue;
            }
            let dev = dot(units.row(i), units.row(j)) - target;
            value += dev.abs();
            // each ordered pair (i, j) contributes to both unit vectors
            let sign = if dev > 0.0 {
                1.0
            } else if dev < 0.0 {
                -1.0
            } else {
                0.0
            };
            axpy(sign / denom, units.row(j), d_units.row_mut(i));
            axpy(sign / denom, units.row(i), d_units.row_mut(j));
        }
    }
    Ok((value / denom, unit_rows_backward(&units, &norms, &d_units)))
}

fn self_duality_grad(
    classifier: &RealMatrix,
    centered_means: &RealMatrix,
) -> Result<(f64, RealMatrix, RealMatrix)> {
    let (w, w_norms) = unit_rows(classifier)?;
    let (m, m_norms) = unit_rows(centered_means)?;
    let diff = w.sub(&m);
    let value = diff.frobenius_norm().powi(2);
    let d_w = unit_rows_backward(&w, &w_norms, &diff.scaled(2.0));
    let d_m = unit_rows_backward(&m, &m_norms, &diff.scaled(-2.0));
    Ok((value, d_w, d_m))
}
