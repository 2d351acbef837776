//! Singular spectrum of trained features, with ID and OoD probes projected
//! onto the same basis. OoD energy lingers past the first C directions.
//!
//! ```bash
//! cargo run --release --example feature_spectrum
//! ```

use nc_ood::datagen::{generate, OodKind, SyntheticSpec};
use nc_ood::eval::svd_spectrum_projection;
use nc_ood::model::{train, MlpClassifier, ModelSpec, TrainConfig};
use nc_ood::Result;

fn main() -> Result<()> {
    let seed = 0;
    let data = generate(&SyntheticSpec {
        seed,
        num_classes: 8,
        input_dim: 16,
        samples_per_class: 100,
        cluster_spread: 1.0,
        class_separation: 4.0,
        ood_kind: OodKind::IsotropicShell { radius: 6.0 },
        ood_samples: 400,
    })?;
    let spec = ModelSpec {
        l2_normalize_features: true,
        ..ModelSpec::default()
    };
    let config = TrainConfig {
        seed,
        epochs: 60,
        lr_milestones: vec![],
        ..TrainConfig::default()
    };
    let (model, _) = train(&MlpClassifier::init(&spec, 16, 8, seed)?, &data.train, &config)?;
    let z = |x: &nc_ood::RealMatrix| model.forward(x).map(|(f, _)| f);
    let train_z = z(data.train.features())?;
    let id = svd_spectrum_projection(&train_z, &z(data.id_test.features())?)?;
    let ood = svd_spectrum_projection(&train_z, &z(&data.ood_test)?)?;

    println!("{:>3} {:>10} {:>10} {:>10}", "k", "train", "id", "ood");
    for k in 0..id.train_singular_values.len() {
        println!(
            "{k:>3} {:>10.4} {:>10.4} {:>10.4}",
            id.train_singular_values[k], id.probe_magnitudes[k], ood.probe_magnitudes[k]
        );
    }
    println!("tail beyond index 8: id {:.3}, ood {:.3}", id.probe_tail(8), ood.probe_tail(8));
    Ok(())
}
