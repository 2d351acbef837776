//! Separability and diagnostic measures for scored populations.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    GmmFeature,
    GmmLogit,
    SoftmaxMax,
}

impl ScoreSource {
    pub const ALL: [ScoreSource; 3] = [
        ScoreSource::GmmFeature,
        ScoreSource::GmmLogit,
        ScoreSource::SoftmaxMax,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreSource::GmmFeature => "gmm-feature",
            ScoreSource::GmmLogit => "gmm-logit",
            ScoreSource::SoftmaxMax => "softmax-max",
        }
    }
}

/// In-distribution and out-of-distribution scores; higher means more
/// in-distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPopulations {
    id_scores: Vec<f64>,
    ood_scores: Vec<f64>,
    score_source: ScoreSource,
}

impl ScoredPopulations {
    pub fn new(id_scores: Vec<f64>, ood_scores: Vec<f64>, score_source: ScoreSource) -> Result<Self> {
        if id_scores.is_empty() || ood_scores.is_empty() {
            return Err(Error::invalid("both populations must be nonempty"));
        }
        if id_scores.iter().chain(&ood_scores).any(|s| !s.is_finite()) {
            return Err(Error::invalid("scores must be finite"));
        }
        Ok(Self {
            id_scores,
            ood_scores,
            score_source,
        })
    }

    pub fn id_scores(&self) -> &[f64] {
        &self.id_scores
    }

    pub fn ood_scores(&self) -> &[f64] {
        &self.ood_scores
    }

    pub fn score_source(&self) -> ScoreSource {
        self.score_source
    }

    /// Same scores with the roles of the two populations exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            id_scores: self.ood_scores.clone(),
            ood_scores: self.id_scores.clone(),
            score_source: self.score_source,
        }
    }
}

fn cmp_scores(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).expect("finite scores")
}

/// Probability that a random ID score beats a random OoD score, ties
/// counting one half, from mid-rank sums.
///
/// Ranks are accumulated doubled so every intermediate is an exact integer.
pub fn auroc(pop: &ScoredPopulations) -> f64 {
    let n = pop.id_scores.len() as u128;
    let m = pop.ood_scores.len() as u128;
    let mut merged: Vec<(f64, bool)> = pop
        .id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(pop.ood_scores.iter().map(|&s| (s, false)))
        .collect();
    merged.sort_by(|a, b| cmp_scores(&a.0, &b.0));

    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < merged.len() {
        let mut end = start;
        while end + 1 < merged.len() && merged[end + 1].0 == merged[start].0 {
            end += 1;
        }
        // 1-based ranks start+1..=end+1 share the mid-rank; doubled it is
        // (start + 1) + (end + 1)
        let doubled_mid = (start + end + 2) as u128;
        let ids = merged[start..=end].iter().filter(|e| e.1).count() as u128;
        doubled_rank_sum += doubled_mid * ids;
        start = end + 1;
    }
    let doubled_u = doubled_rank_sum - n * (n + 1);
    doubled_u as f64 / (2 * n * m) as f64
}

/// Number of OoD samples ranked among the top `|ID|` scores of the merged
/// population. At a tied cutoff OoD samples rank first.
pub fn false_positive_count(pop: &ScoredPopulations) -> usize {
    let mut merged: Vec<(f64, bool)> = pop
        .id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(pop.ood_scores.iter().map(|&s| (s, true)))
        .collect();
    merged.sort_by(|a, b| cmp_scores(&b.0, &a.0).then(b.1.cmp(&a.1)));
    merged
        .iter()
        .take(pop.id_scores.len())
        .filter(|e| e.1)
        .count()
}

/// Largest softmax probability of each row.
pub fn softmax_max_score(logits: &RealMatrix) -> Vec<f64> {
    logits
        .row_iter()
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            1.0 / row.iter().map(|x| (x - max).exp()).sum::<f64>()
        })
        .collect()
}

/// Row argmax with ties going to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn classification_accuracy(logits: &RealMatrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != logits.rows() || labels.is_empty() {
        return Err(Error::invalid("need one label per nonempty logit row"));
    }
    if labels.iter().any(|&l| l >= logits.cols()) {
        return Err(Error::invalid("label out of range"));
    }
    let correct = logits
        .row_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("need two equal-length series of at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::degenerate("constant series has no correlation"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Singular spectrum of the centered training features, and the energy of
/// a probe set along each right-singular direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumProjection {
    pub train_singular_values: Vec<f64>,
    /// Root-sum-square of probe coordinates per direction, scaled by
    /// `√(N_train / N_probe)`.
    pub probe_magnitudes: Vec<f64>,
}

impl SpectrumProjection {
    /// Sum of the probe magnitudes from index `start` on.
    pub fn probe_tail(&self, start: usize) -> f64 {
        self.probe_magnitudes.iter().skip(start).sum()
    }
}

/// Probes are centered with the training mean before projection, so
/// `probe = train` reproduces the training spectrum.
pub fn svd_spectrum_projection(train: &RealMatrix, probe: &RealMatrix) -> Result<SpectrumProjection> {
    if train.cols() != probe.cols() {
        return Err(Error::invalid(format!(
            "train width {} but probe width {}",
            train.cols(),
            probe.cols()
        )));
    }
    if train.rows() == 0 || probe.rows() == 0 {
        return Err(Error::invalid("empty feature set"));
    }
    let mean = train.column_mean();
    let dec = svd(&train.center_rows(&mean))?;
    let coords = probe.center_rows(&mean).matmul(&dec.v);
    let scale = (train.rows() as f64 / probe.rows() as f64).sqrt();
    let mut magnitudes = vec![0.0; coords.cols()];
    for row in coords.row_iter() {
        for (m, x) in magnitudes.iter_mut().zip(row) {
            *m += x * x;
        }
    }
    magnitudes.iter_mut().for_each(|m| *m = m.sqrt() * scale);
    Ok(SpectrumProjection {
        train_singular_values: dec.singular_values,
        probe_magnitudes: magnitudes,
    })
}
