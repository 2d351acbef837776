//! Scoring a trained model against one synthetic dataset.

use serde::{Deserialize, Serialize};

use crate::datagen::SyntheticData;
use crate::ddu::{fit_gmm, GaussianMixtureDensity, SpaceTag};
use crate::error::Result;
use crate::eval::{
    auroc, classification_accuracy, false_positive_count, softmax_max_score, ScoreSource,
    ScoredPopulations,
};
use crate::model::MlpClassifier;
use crate::stats::FeatureBank;

/// Scores and separability for every source on one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub feature_gmm: GaussianMixtureDensity,
    pub logit_gmm: GaussianMixtureDensity,
    pub populations: Vec<ScoredPopulations>,
    pub summary: EvalSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub auroc_gmm_feature: f64,
    pub auroc_gmm_logit: f64,
    pub auroc_softmax_max: f64,
    pub id_accuracy: f64,
    /// Counted on the feature-space GMM score.
    pub false_positives: usize,
}

impl EvalSummary {
    pub fn auroc(&self, source: ScoreSource) -> f64 {
        match source {
            ScoreSource::GmmFeature => self.auroc_gmm_feature,
            ScoreSource::GmmLogit => self.auroc_gmm_logit,
            ScoreSource::SoftmaxMax => self.auroc_softmax_max,
        }
    }
}

/// Fits both densities on the training set in one pass, then scores the
/// ID and OoD test sets.
pub fn evaluate(model: &MlpClassifier, data: &SyntheticData) -> Result<Evaluation> {
    let (train_z, train_logits) = model.forward(data.train.features())?;
    let labels = data.train.labels().to_vec();
    let c = data.train.num_classes();
    let feature_gmm = fit_gmm(
        &FeatureBank::new(train_z, labels.clone(), c)?,
        SpaceTag::FeatureSpace,
    )?;
    let logit_gmm = fit_gmm(&FeatureBank::new(train_logits, labels, c)?, SpaceTag::LogitSpace)?;

    let (id_z, id_logits) = model.forward(data.id_test.features())?;
    let (ood_z, ood_logits) = model.forward(&data.ood_test)?;
    let populations = vec![
        ScoredPopulations::new(
            feature_gmm.score(&id_z)?,
            feature_gmm.score(&ood_z)?,
            ScoreSource::GmmFeature,
        )?,
        ScoredPopulations::new(
            logit_gmm.score(&id_logits)?,
            logit_gmm.score(&ood_logits)?,
            ScoreSource::GmmLogit,
        )?,
        ScoredPopulations::new(
            softmax_max_score(&id_logits),
            softmax_max_score(&ood_logits),
            ScoreSource::SoftmaxMax,
        )?,
    ];
    let summary = EvalSummary {
        auroc_gmm_feature: auroc(&populations[0]),
        auroc_gmm_logit: auroc(&populations[1]),
        auroc_softmax_max: auroc(&populations[2]),
        id_accuracy: classification_accuracy(&id_logits, data.id_test.labels())?,
        false_positives: false_positive_count(&populations[0]),
    };
    Ok(Evaluation {
        feature_gmm,
        logit_gmm,
        populations,
        summary,
    })
}
