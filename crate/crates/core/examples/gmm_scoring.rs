//! Fit class-conditional Gaussians on trained features and logits, then
//! separate ID from OoD inputs with each score.
//!
//! ```bash
//! cargo run --release --example gmm_scoring
//! ```

use nc_ood::datagen::{generate, OodKind, SyntheticSpec};
use nc_ood::eval::ScoreSource;
use nc_ood::harness::evaluate;
use nc_ood::model::{train, MlpClassifier, ModelSpec, TrainConfig};
use nc_ood::Result;

fn main() -> Result<()> {
    let seed = 2;
    let data = generate(&SyntheticSpec {
        seed,
        num_classes: 8,
        input_dim: 16,
        samples_per_class: 100,
        cluster_spread: 1.0,
        class_separation: 4.0,
        ood_kind: OodKind::ShiftedClusters { shift: 10.0 },
        ood_samples: 400,
    })?;
    let model = MlpClassifier::init(&ModelSpec::default(), 16, 8, seed)?;
    let config = TrainConfig {
        seed,
        epochs: 60,
        lr_milestones: vec![],
        ..TrainConfig::default()
    };
    let (model, _) = train(&model, &data.train, &config)?;
    let ev = evaluate(&model, &data)?;

    println!("feature GMM jitter {:e}, logit GMM jitter {:e}", ev.feature_gmm.jitter(), ev.logit_gmm.jitter());
    for source in ScoreSource::ALL {
        println!("AUROC {:<12} {:.4}", source.as_str(), ev.summary.auroc(source));
    }
    println!(
        "ID accuracy {:.3}; OoD inputs among the top {} feature-GMM scores: {}",
        ev.summary.id_accuracy,
        data.id_test.len(),
        ev.summary.false_positives
    );

    let restored = nc_ood::ddu::GaussianMixtureDensity::from_json(&ev.feature_gmm.to_json()?)?;
    let z = model.forward(data.id_test.features())?.0;
    println!("JSON round trip scores identically: {}", restored.score(&z)? == ev.feature_gmm.score(&z)?);
    Ok(())
}
