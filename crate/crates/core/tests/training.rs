use nc_ood::datagen::{generate, OodKind, SyntheticData, SyntheticSpec};
use nc_ood::formats::{decode_checkpoint, decode_feature_dump, encode_checkpoint, encode_feature_dump, FeatureDump};
use nc_ood::linalg::{norm, svd, RealMatrix};
use nc_ood::model::{
    intervene, softmax, train, train_observed, Activation, DenseLayer, LossMode, MlpClassifier, ModelSpec,
    TrainConfig,
};
use nc_ood::rng::Stream;

fn blobs(seed: u64) -> SyntheticData {
    generate(&SyntheticSpec {
        seed,
        num_classes: 3,
        input_dim: 4,
        samples_per_class: 40,
        cluster_spread: 0.3,
        class_separation: 4.0,
        ood_kind: OodKind::UniformBox { low: -6.0, high: 6.0 },
        ood_samples: 20,
    })
    .unwrap()
}

fn config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        seed,
        epochs,
        batch_size: 16,
        initial_lr: 0.1,
        lr_milestones: vec![],
        lr_decay: 0.1,
        loss_mode: LossMode::CrossEntropy,
        class_balanced_batches: false,
    }
}

fn spec(l2: bool, spectral: bool) -> ModelSpec {
    ModelSpec {
        hidden_dims: vec![16, 8],
        l2_normalize_features: l2,
        spectral_normalize: spectral,
        ..ModelSpec::default()
    }
}

#[test]
fn zero_network_predicts_uniformly() {
    let layer = DenseLayer {
        weights: RealMatrix::zeros(3, 4),
        bias: vec![0.0; 3],
    };
    let model = MlpClassifier::from_parts(vec![layer], RealMatrix::zeros(5, 3), Activation::Relu, false, false).unwrap();
    let (_, logits) = model.forward(&RealMatrix::from_fn(6, 4, |i, j| (i * j) as f64 - 2.0)).unwrap();
    assert!(logits.as_slice().iter().all(|&x| x == 0.0));
    assert!(softmax(&logits).as_slice().iter().all(|&p| (p - 0.2).abs() < 1e-15));
}

#[test]
fn identity_layer_passes_nonnegative_input_through() {
    let layer = DenseLayer {
        weights: RealMatrix::identity(3),
        bias: vec![0.0; 3],
    };
    let model = MlpClassifier::from_parts(vec![layer], RealMatrix::identity(3), Activation::Relu, false, false).unwrap();
    let x = RealMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64 * 0.5);
    assert_eq!(model.forward(&x).unwrap().0, x);
}

#[test]
fn l2_features_have_unit_norm() {
    let model = MlpClassifier::init(&spec(true, false), 4, 3, 3).unwrap();
    let mut rng = Stream::derive(3, "inputs");
    let x = RealMatrix::from_fn(50, 4, |_, _| rng.standard_normal());
    for z in model.forward(&x).unwrap().0.row_iter() {
        let n = norm(z);
        assert!(n == 0.0 || (n - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn separable_blobs_are_learned() {
    let data = blobs(0);
    let model = MlpClassifier::init(&spec(false, false), 4, 3, 0).unwrap();
    let (_, trace) = train(&model, &data.train, &config(0, 30)).unwrap();
    assert_eq!(trace.records.len(), 30);
    assert!(trace.last().unwrap().train_accuracy > 0.99);
    assert!(trace.records.iter().enumerate().all(|(i, r)| r.epoch == i + 1));
}

#[test]
fn same_seed_gives_identical_traces() {
    let data = blobs(1);
    let model = MlpClassifier::init(&spec(true, true), 4, 3, 1).unwrap();
    let (a, ta) = train(&model, &data.train, &config(1, 5)).unwrap();
    let (b, tb) = train(&model, &data.train, &config(1, 5)).unwrap();
    assert!(ta.same_outcome(&tb));
    assert_eq!(a.parameters(), b.parameters());
    let (_, tc) = train(&model, &data.train, &config(2, 5)).unwrap();
    assert!(!ta.same_outcome(&tc));
}

#[test]
fn spectral_normalization_caps_hidden_layers() {
    let data = blobs(2);
    let mut model = MlpClassifier::init(&spec(false, true), 4, 3, 2).unwrap();
    let cfg = TrainConfig {
        initial_lr: 0.5,
        ..config(2, 10)
    };
    train_observed(&mut model, &data.train, &cfg, |_, m| {
        for layer in m.layers() {
            let sigma = svd(&layer.weights).unwrap().singular_values[0];
            assert!(sigma <= 1.05, "top singular value {sigma}");
        }
        assert!(m.spectral_estimates().iter().all(|&s| s <= 1.05));
        Ok(())
    })
    .unwrap();
}

#[test]
fn intervention_arms_share_a_start_and_control_keeps_descending() {
    let data = blobs(3);
    let model = MlpClassifier::init(&spec(false, false), 4, 3, 3).unwrap();
    let base_cfg = config(3, 10);
    let (checkpoint, base) = train(&model, &data.train, &base_cfg).unwrap();
    let control = base_cfg.continuation(10, LossMode::CrossEntropy, 15, 1.0);
    let nc = base_cfg.continuation(10, LossMode::NcLoss, 15, 1.0);
    let out = intervene(&checkpoint, &data.train, &control, &nc).unwrap();
    assert_eq!(out.start, base.last().unwrap().nc);
    assert_eq!(out.control.records.len(), 15);
    assert_eq!(out.intervention.records.len(), 15);

    let ce: Vec<f64> = out.control.records.iter().map(|r| r.cross_entropy).collect();
    let avg: Vec<f64> = ce.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    assert!(avg.last().unwrap() <= avg.first().unwrap(), "{avg:?}");
    // swapped loss modes are refused
    assert!(intervene(&checkpoint, &data.train, &nc, &control).is_err());
}

#[test]
fn checkpoints_and_dumps_round_trip_bit_exactly() {
    let data = blobs(4);
    let model = MlpClassifier::init(
        &ModelSpec {
            activation: Activation::leaky(),
            ..spec(true, true)
        },
        4,
        3,
        4,
    )
    .unwrap();
    let (trained, _) = train(&model, &data.train, &config(4, 3)).unwrap();
    let bytes = encode_checkpoint(&trained).unwrap();
    assert_eq!(&bytes[..4], b"NCCK");
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, trained);
    assert_eq!(encode_checkpoint(&back).unwrap(), bytes);

    // a restored model continues exactly like the original
    let (x, _) = train(&trained, &data.train, &config(5, 2)).unwrap();
    let (y, _) = train(&back, &data.train, &config(5, 2)).unwrap();
    assert_eq!(x.parameters(), y.parameters());

    for dump in [FeatureDump::Labeled(data.train.clone()), FeatureDump::Unlabeled(data.ood_test.clone())] {
        let bytes = encode_feature_dump(&dump).unwrap();
        assert_eq!(&bytes[..4], b"NCFB");
        assert_eq!(decode_feature_dump(&bytes).unwrap(), dump);
    }
    assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
}
