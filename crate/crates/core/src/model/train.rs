use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, cross_entropy_grad, nc_loss, nc_loss_grad};
use super::mlp::{Gradients, MlpClassifier};
use crate::linalg::RealMatrix;
use crate::error::{Error, Result};
use crate::eval::classification_accuracy;
use crate::metrics::{nc_report, NcReport};
use crate::rng::Stream;
use crate::stats::FeatureBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    CrossEntropy,
    NcLoss,
}

/// Plain minibatch SGD with a stepped learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    /// Epoch indices (0-based) at which the rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub loss_mode: LossMode,
    pub class_balanced_batches: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 60,
            batch_size: 64,
            initial_lr: 0.1,
            lr_milestones: vec![40, 50],
            lr_decay: 0.1,
            loss_mode: LossMode::CrossEntropy,
            class_balanced_batches: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.initial_lr > 0.0 && self.lr_decay > 0.0) {
            return Err(Error::invalid("learning rate and decay must be positive"));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("lr milestones must be strictly increasing"));
        }
        if self.lr_milestones.iter().any(|&m| m >= self.epochs) {
            return Err(Error::invalid("lr milestones must be below the epoch count"));
        }
        if self.loss_mode == LossMode::NcLoss && !self.class_balanced_batches {
            return Err(Error::invalid("the collapse loss needs class-balanced batches"));
        }
        Ok(())
    }

    /// Learning rate used during (0-based) `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let steps = self.lr_milestones.iter().filter(|&&m| m <= epoch).count();
        self.initial_lr * self.lr_decay.powi(steps as i32)
    }

    /// Continuation recipe for branching a partly trained model: start at
    /// `lr_factor` times the rate in effect at `branch_epoch` and step down
    /// tenfold after ten epochs. [`CONTINUATION_LR_FACTOR`] is the usual
    /// order-of-magnitude drop.
    pub fn continuation(
        &self,
        branch_epoch: usize,
        loss_mode: LossMode,
        epochs: usize,
        lr_factor: f64,
    ) -> Self {
        let lr = self.learning_rate(branch_epoch.saturating_sub(1)) * lr_factor;
        Self {
            seed: self.seed ^ 0x9e37_79b9_7f4a_7c15,
            epochs,
            batch_size: self.batch_size,
            initial_lr: lr,
            lr_milestones: if epochs > 10 { vec![10] } else { Vec::new() },
            lr_decay: 0.1,
            loss_mode,
            class_balanced_batches: self.class_balanced_batches || loss_mode == LossMode::NcLoss,
        }
    }
}

pub const CONTINUATION_LR_FACTOR: f64 = 0.1;

/// Full-training-set measurements taken after an epoch.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based count of completed epochs.
    pub epoch: usize,
    pub cross_entropy: f64,
    pub train_accuracy: f64,
    pub nc: NcReport,
    pub learning_rate: f64,
    pub wall_seconds: f64,
}

impl EpochRecord {
    /// Equality on everything except wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.cross_entropy.to_bits() == other.cross_entropy.to_bits()
            && self.train_accuracy.to_bits() == other.train_accuracy.to_bits()
            && self.nc.values().map(f64::to_bits) == other.nc.values().map(f64::to_bits)
            && self.learning_rate.to_bits() == other.learning_rate.to_bits()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    /// Bitwise equality of every deterministic field.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_outcome(b))
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Cross-entropy, accuracy and collapse metrics over a whole labeled set.
pub fn measure(model: &MlpClassifier, data: &FeatureBank) -> Result<(f64, f64, NcReport)> {
    let (features, logits) = model.forward(data.features())?;
    let ce = cross_entropy(&logits, data.labels())?;
    let acc = classification_accuracy(&logits, data.labels())?;
    let nc = nc_report(&data.with_features(features)?, model.classifier())?;
    Ok((ce, acc, nc))
}

/// Batch loss and exact parameter gradients.
pub fn loss_and_gradients(
    model: &MlpClassifier,
    inputs: &RealMatrix,
    labels: &[usize],
    mode: LossMode,
) -> Result<(f64, Gradients)> {
    let pass = model.forward_pass(inputs)?;
    let (loss, d_features, d_classifier) = match mode {
        LossMode::CrossEntropy => {
            let (loss, d_logits) = cross_entropy_grad(&pass.logits, labels)?;
            let d_features = d_logits.matmul(model.classifier());
            let d_classifier = d_logits.t_matmul(&pass.features);
            (loss, d_features, d_classifier)
        }
        LossMode::NcLoss => {
            let g = nc_loss_grad(&pass.features, labels, model.classifier())?;
            (g.loss, g.d_features, g.d_classifier)
        }
    };
    Ok((loss, model.backward(&pass, &d_features, d_classifier)))
}

/// Batch loss alone.
pub fn batch_loss(
    model: &MlpClassifier,
    inputs: &RealMatrix,
    labels: &[usize],
    mode: LossMode,
) -> Result<f64> {
    let (features, logits) = model.forward(inputs)?;
    match mode {
        LossMode::CrossEntropy => cross_entropy(&logits, labels),
        LossMode::NcLoss => nc_loss(&features, labels, model.classifier()),
    }
}

fn batches(config: &TrainConfig, data: &FeatureBank, rng: &mut Stream) -> Vec<Vec<usize>> {
    let n = data.len();
    let mut count = n.div_ceil(config.batch_size).max(1);
    if config.class_balanced_batches {
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes()];
        for (i, &y) in data.labels().iter().enumerate() {
            per_class[y].push(i);
        }
        count = count.min(per_class.iter().map(Vec::len).min().unwrap_or(1));
        let mut out = vec![Vec::new(); count];
        for idx in &mut per_class {
            rng.shuffle(idx);
            // deal each class evenly across batches
            for (k, &i) in idx.iter().enumerate() {
                out[k * count / idx.len()].push(i);
            }
        }
        out
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        idx.chunks(config.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Trains in place, calling `observer` after every epoch with the record and
/// the current model.
pub fn train_observed(
    model: &mut MlpClassifier,
    data: &FeatureBank,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord, &MlpClassifier) -> Result<()>,
) -> Result<TrainTrace> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("no training data"));
    }
    if data.dim() != model.input_dim() || data.num_classes() != model.num_classes() {
        return Err(Error::invalid("data shape does not match the model"));
    }
    let mut rng = Stream::derive(config.seed, "train");
    let mut trace = TrainTrace::default();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.learning_rate(epoch);
        for batch in batches(config, data, &mut rng) {
            let inputs = data.features().select_rows(&batch);
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels()[i]).collect();
            let (loss, grads) = loss_and_gradients(model, &inputs, &labels, config.loss_mode)
                .map_err(|e| diverged_or(e, epoch))?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            model.sgd_step(&grads, lr);
            if !model.parameters_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
        }
        let (ce, acc, nc) = measure(model, data)?;
        if !ce.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            cross_entropy: ce,
            train_accuracy: acc,
            nc,
            learning_rate: lr,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        observer(&record, model)?;
        trace.records.push(record);
    }
    Ok(trace)
}

// non-finite features surface from the svd as invalid input
fn diverged_or(e: Error, epoch: usize) -> Error {
    match e {
        Error::InvalidInput(ref m) if m.contains("non-finite") => Error::TrainingDiverged { epoch },
        other => other,
    }
}

/// Trains a copy of `model` and returns it with its trace.
pub fn train(
    model: &MlpClassifier,
    data: &FeatureBank,
    config: &TrainConfig,
) -> Result<(MlpClassifier, TrainTrace)> {
    let mut m = model.clone();
    let trace = train_observed(&mut m, data, config, |_, _| Ok(()))?;
    Ok((m, trace))
}

/// Two continuations from one checkpoint.
#[derive(Debug, Clone)]
pub struct InterventionOutcome {
    /// Metrics of the checkpoint itself, before either arm takes a step.
    pub start: NcReport,
    pub control: TrainTrace,
    pub intervention: TrainTrace,
    pub control_model: MlpClassifier,
    pub intervention_model: MlpClassifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Control,
    Intervention,
}

/// Continues `checkpoint` once under cross-entropy (control) and once under
/// the collapse loss (intervention).
pub fn intervene(
    checkpoint: &MlpClassifier,
    data: &FeatureBank,
    control_config: &TrainConfig,
    intervention_config: &TrainConfig,
) -> Result<InterventionOutcome> {
    intervene_observed(checkpoint, data, control_config, intervention_config, |_, _, _| Ok(()))
}

/// [`intervene`], calling `observer` after every epoch of either arm. The
/// control arm runs first.
pub fn intervene_observed(
    checkpoint: &MlpClassifier,
    data: &FeatureBank,
    control_config: &TrainConfig,
    intervention_config: &TrainConfig,
    mut observer: impl FnMut(Arm, &EpochRecord, &MlpClassifier) -> Result<()>,
) -> Result<InterventionOutcome> {
    if control_config.loss_mode != LossMode::CrossEntropy {
        return Err(Error::invalid("control arm must train with cross-entropy"));
    }
    if intervention_config.loss_mode != LossMode::NcLoss {
        return Err(Error::invalid("intervention arm must train with the collapse loss"));
    }
    let (_, _, start) = measure(checkpoint, data)?;
    let mut control_model = checkpoint.clone();
    let control = train_observed(&mut control_model, data, control_config, |r, m| {
        observer(Arm::Control, r, m)
    })?;
    let mut intervention_model = checkpoint.clone();
    let intervention = train_observed(&mut intervention_model, data, intervention_config, |r, m| {
        observer(Arm::Intervention, r, m)
    })?;
    Ok(InterventionOutcome {
        start,
        control,
        intervention,
        control_model,
        intervention_model,
    })
}
