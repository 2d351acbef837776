//! Feature dumps (NCFB) and model checkpoints (NCCK): write, read back,
//! compare bit for bit.
//!
//! ```bash
//! cargo run --example binary_formats
//! ```

use nc_ood::datagen::{generate, OodKind, SyntheticSpec};
use nc_ood::formats::{
    decode_checkpoint, decode_feature_dump, encode_checkpoint, encode_feature_dump, read_bytes, write_bytes,
    FeatureDump,
};
use nc_ood::model::{Activation, MlpClassifier, ModelSpec};
use nc_ood::Result;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("nc-ood-formats-example");
    let data = generate(&SyntheticSpec {
        seed: 3,
        num_classes: 3,
        input_dim: 4,
        samples_per_class: 10,
        cluster_spread: 0.5,
        class_separation: 3.0,
        ood_kind: OodKind::UniformBox { low: -5.0, high: 5.0 },
        ood_samples: 12,
    })?;

    let path = dir.join("train.ncfb");
    write_bytes(&path, &encode_feature_dump(&FeatureDump::Labeled(data.train.clone()))?)?;
    let bytes = read_bytes(&path)?;
    println!("{}: {} bytes, header {:?}", path.display(), bytes.len(), &bytes[..5]);
    match decode_feature_dump(&bytes)? {
        FeatureDump::Labeled(bank) => println!("labeled dump round trip exact: {}", bank == data.train),
        FeatureDump::Unlabeled(_) => unreachable!("a labeled bank was written"),
    }
    let ood = encode_feature_dump(&FeatureDump::Unlabeled(data.ood_test.clone()))?;
    println!("unlabeled dump round trip exact: {}", decode_feature_dump(&ood)?.features() == &data.ood_test);

    let spec = ModelSpec {
        hidden_dims: vec![8, 5],
        activation: Activation::leaky(),
        l2_normalize_features: true,
        spectral_normalize: true,
        ..ModelSpec::default()
    };
    let model = MlpClassifier::init(&spec, 4, 3, 9)?;
    let encoded = encode_checkpoint(&model)?;
    let back = decode_checkpoint(&encoded)?;
    println!(
        "checkpoint: {} bytes, parameters bit-identical: {}, re-encodes identically: {}",
        encoded.len(),
        back.parameters().iter().map(|x| x.to_bits()).eq(model.parameters().iter().map(|x| x.to_bits())),
        encode_checkpoint(&back)? == encoded
    );
    Ok(())
}
