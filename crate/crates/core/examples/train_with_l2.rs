//! Cross-entropy training with and without feature L2 normalization,
//! printing how fast within-class variability collapses.
//!
//! ```bash
//! cargo run --release --example train_with_l2
//! ```

use nc_ood::datagen::{generate, OodKind, SyntheticSpec};
use nc_ood::model::{train_observed, LossMode, MlpClassifier, ModelSpec, TrainConfig};
use nc_ood::Result;

fn main() -> Result<()> {
    let seed = 0;
    let data = generate(&SyntheticSpec {
        seed,
        num_classes: 8,
        input_dim: 16,
        samples_per_class: 100,
        cluster_spread: 0.8,
        class_separation: 2.4,
        ood_kind: OodKind::IsotropicShell { radius: 6.0 },
        ood_samples: 100,
    })?;
    let config = TrainConfig {
        seed,
        epochs: 40,
        lr_milestones: vec![],
        loss_mode: LossMode::CrossEntropy,
        ..TrainConfig::default()
    };
    for l2 in [false, true] {
        let spec = ModelSpec {
            l2_normalize_features: l2,
            ..ModelSpec::default()
        };
        let mut model = MlpClassifier::init(&spec, 16, 8, seed)?;
        let mut first_below = None;
        let trace = train_observed(&mut model, &data.train, &config, |r, _| {
            if first_below.is_none() && r.nc.nc1 < 0.5 {
                first_below = Some(r.epoch);
            }
            Ok(())
        })?;
        let last = trace.last().expect("at least one epoch");
        println!(
            "l2={l2:<5} NC1<0.5 first at epoch {first_below:?}; after {} epochs: NC1 {:.3}, EA means {:.3}, NC3 {:.3}, train acc {:.3}",
            last.epoch, last.nc.nc1, last.nc.ea_means, last.nc.nc3, last.train_accuracy
        );
    }
    Ok(())
}
