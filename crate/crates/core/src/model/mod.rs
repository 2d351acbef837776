//! Feed-forward classifier, training objectives and the SGD loop.

pub mod loss;
pub mod mlp;
pub mod train;

pub use loss::{cross_entropy, cross_entropy_grad, nc_loss, nc_loss_grad, softmax, NcLossGrad};
pub use mlp::{
    l2_normalize_backward, power_iteration, Activation, DenseLayer, ForwardPass, Gradients,
    MlpClassifier, ModelSpec, DEFAULT_LEAKY_SLOPE,
};
pub use train::{
    batch_loss, intervene, intervene_observed, loss_and_gradients, measure, train, train_observed, Arm, EpochRecord,
    InterventionOutcome, LossMode, TrainConfig, TrainTrace, CONTINUATION_LR_FACTOR,
};
