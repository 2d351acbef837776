//! Branch a half-trained model into a cross-entropy control and a
//! collapse-loss arm; follow NC1 and false positives along both.
//!
//! ```bash
//! cargo run --release --example nc_intervention
//! ```

use nc_ood::datagen::{generate, OodKind, SyntheticSpec};
use nc_ood::harness::evaluate;
use nc_ood::model::{
    intervene_observed, measure, train, Arm, LossMode, MlpClassifier, ModelSpec, TrainConfig,
};
use nc_ood::Result;

fn main() -> Result<()> {
    let seed = 1;
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
    let full = TrainConfig {
        seed,
        epochs: 60,
        lr_milestones: vec![],
        ..TrainConfig::default()
    };
    let half = TrainConfig { epochs: 30, ..full.clone() };
    let (checkpoint, _) = train(&MlpClassifier::init(&ModelSpec::default(), 16, 8, seed)?, &data.train, &half)?;
    let (_, _, start) = measure(&checkpoint, &data.train)?;
    let fp0 = evaluate(&checkpoint, &data)?.summary.false_positives;
    println!("checkpoint at epoch 30: NC1 {:.3}, false positives {fp0}", start.nc1);

    let control = full.continuation(30, LossMode::CrossEntropy, 20, 2.0);
    let collapse = full.continuation(30, LossMode::NcLoss, 20, 2.0);
    println!("{:>5} {:>12} {:>6} {:>12}", "epoch", "arm", "NC1", "false pos");
    intervene_observed(&checkpoint, &data.train, &control, &collapse, |arm, r, m| {
        let fp = evaluate(m, &data)?.summary.false_positives;
        let name = match arm {
            Arm::Control => "control",
            Arm::Intervention => "nc-loss",
        };
        println!("{:>5} {name:>12} {:>6.3} {fp:>12}", 30 + r.epoch, r.nc.nc1);
        Ok(())
    })?;
    Ok(())
}
