use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, RealMatrix, DEFAULT_L2_EPSILON};
use crate::rng::Stream;

/// Default negative slope of the leaky rectifier.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    fn negative_slope(self) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::LeakyRelu { slope } => slope,
        }
    }

    fn apply(self, x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            self.negative_slope() * x
        }
    }

    fn derivative(self, x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else {
            self.negative_slope()
        }
    }
}

/// Architecture and intervention toggles, without weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub l2_normalize_features: bool,
    #[serde(default = "default_l2_epsilon")]
    pub l2_epsilon: f64,
    pub spectral_normalize: bool,
    #[serde(default = "default_spectral_iterations")]
    pub spectral_iterations: usize,
}

fn default_l2_epsilon() -> f64 {
    DEFAULT_L2_EPSILON
}

fn default_spectral_iterations() -> usize {
    1
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32, 32, 16],
            activation: Activation::Relu,
            l2_normalize_features: false,
            l2_epsilon: DEFAULT_L2_EPSILON,
            spectral_normalize: false,
            spectral_iterations: 1,
        }
    }
}

/// Fully connected hidden layer, `y = act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: RealMatrix,
    pub bias: Vec<f64>,
}

/// Feed-forward classifier: hidden rectifier layers produce the feature
/// vector, a bias-free linear map produces the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    pub(crate) layers: Vec<DenseLayer>,
    /// `C × d`, no bias.
    pub(crate) classifier: RealMatrix,
    pub(crate) activation: Activation,
    pub(crate) l2_normalize_features: bool,
    pub(crate) l2_epsilon: f64,
    pub(crate) spectral_normalize: bool,
    pub(crate) spectral_iterations: usize,
    /// Persistent left singular vector estimates, one per hidden layer.
    pub(crate) spectral_u: Vec<Vec<f64>>,
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `activations[0]` is the input; `activations[k+1]` is the output of
    /// hidden layer `k`.
    pub activations: Vec<RealMatrix>,
    pub pre_activations: Vec<RealMatrix>,
    /// Feature rows after optional L2 normalization.
    pub features: RealMatrix,
    pub logits: RealMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
    pub classifier: RealMatrix,
}

impl Gradients {
    /// Flattened in the order of [`MlpClassifier::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(self.classifier.as_slice());
        out
    }
}

impl MlpClassifier {
    /// Uniform `±1/√fan_in` initialization from the `(seed, "init")` stream.
    pub fn init(spec: &ModelSpec, input_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if spec.hidden_dims.is_empty() || spec.hidden_dims.contains(&0) {
            return Err(Error::invalid("need at least one nonempty hidden layer"));
        }
        if input_dim == 0 || num_classes < 2 {
            return Err(Error::invalid("need a nonempty input and at least two classes"));
        }
        if !(spec.l2_epsilon > 0.0) {
            return Err(Error::invalid("l2_epsilon must be positive"));
        }
        if let Activation::LeakyRelu { slope } = spec.activation {
            if !slope.is_finite() {
                return Err(Error::invalid("leaky slope must be finite"));
            }
        }
        let mut rng = Stream::derive(seed, "init");
        let mut layers = Vec::with_capacity(spec.hidden_dims.len());
        let mut fan_in = input_dim;
        for &out in &spec.hidden_dims {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights = RealMatrix::from_fn(out, fan_in, |_, _| rng.uniform_range(-bound, bound));
            let bias = (0..out).map(|_| rng.uniform_range(-bound, bound)).collect();
            layers.push(DenseLayer { weights, bias });
            fan_in = out;
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let classifier = RealMatrix::from_fn(num_classes, fan_in, |_, _| rng.uniform_range(-bound, bound));
        let spectral_u = spec
            .hidden_dims
            .iter()
            .map(|&out| {
                let mut u: Vec<f64> = (0..out).map(|_| rng.standard_normal()).collect();
                let n = norm(&u).max(f64::MIN_POSITIVE);
                u.iter_mut().for_each(|x| *x /= n);
                u
            })
            .collect();
        let mut model = Self {
            layers,
            classifier,
            activation: spec.activation,
            l2_normalize_features: spec.l2_normalize_features,
            l2_epsilon: spec.l2_epsilon,
            spectral_normalize: spec.spectral_normalize,
            spectral_iterations: spec.spectral_iterations.max(1),
            spectral_u,
        };
        if model.spectral_normalize {
            // a fresh random u needs a few sweeps before one per step suffices
            for _ in 0..10 {
                model.apply_spectral_normalization();
            }
        }
        Ok(model)
    }

    /// Assembles a model from explicit parameters.
    pub fn from_parts(
        layers: Vec<DenseLayer>,
        classifier: RealMatrix,
        activation: Activation,
        l2_normalize_features: bool,
        spectral_normalize: bool,
    ) -> Result<Self> {
        let mut fan_in = layers.first().map(|l| l.weights.cols()).unwrap_or(0);
        for (k, l) in layers.iter().enumerate() {
            if l.weights.cols() != fan_in || l.bias.len() != l.weights.rows() {
                return Err(Error::invalid(format!("layer {k} has inconsistent shape")));
            }
            fan_in = l.weights.rows();
        }
        if layers.is_empty() || classifier.cols() != fan_in {
            return Err(Error::invalid("classifier width does not match the feature layer"));
        }
        let spectral_u = layers
            .iter()
            .map(|l| {
                let n = l.weights.rows();
                vec![1.0 / (n as f64).sqrt(); n]
            })
            .collect();
        Ok(Self {
            layers,
            classifier,
            activation,
            l2_normalize_features,
            l2_epsilon: DEFAULT_L2_EPSILON,
            spectral_normalize,
            spectral_iterations: 1,
            spectral_u,
        })
    }

    /// `[input, hidden…, d]`
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weights.cols()];
        dims.extend(self.layers.iter().map(|l| l.weights.rows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.rows()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn classifier(&self) -> &RealMatrix {
        &self.classifier
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn l2_normalize_features(&self) -> bool {
        self.l2_normalize_features
    }

    pub fn l2_epsilon(&self) -> f64 {
        self.l2_epsilon
    }

    pub fn spectral_normalize(&self) -> bool {
        self.spectral_normalize
    }

    pub fn spectral_iterations(&self) -> usize {
        self.spectral_iterations
    }

    pub fn set_classifier(&mut self, classifier: RealMatrix) -> Result<()> {
        if classifier.shape() != self.classifier.shape() {
            return Err(Error::invalid("classifier shape mismatch"));
        }
        self.classifier = classifier;
        Ok(())
    }

    pub fn forward_pass(&self, inputs: &RealMatrix) -> Result<ForwardPass> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input width {} but the model expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        let mut activations = vec![inputs.clone()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut pre = activations.last().unwrap().matmul_t(&layer.weights);
            for i in 0..pre.rows() {
                for (x, b) in pre.row_mut(i).iter_mut().zip(&layer.bias) {
                    *x += b;
                }
            }
            let act = RealMatrix::from_vec(
                pre.rows(),
                pre.cols(),
                pre.as_slice().iter().map(|&x| self.activation.apply(x)).collect(),
            );
            pre_activations.push(pre);
            activations.push(act);
        }
        let raw = activations.last().unwrap();
        let features = if self.l2_normalize_features {
            crate::linalg::l2_normalize_rows(raw, self.l2_epsilon)
        } else {
            raw.clone()
        };
        let logits = features.matmul_t(&self.classifier);
        Ok(ForwardPass {
            activations,
            pre_activations,
            features,
            logits,
        })
    }

    /// Features and logits for a batch of inputs.
    pub fn forward(&self, inputs: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
        let pass = self.forward_pass(inputs)?;
        Ok((pass.features, pass.logits))
    }

    /// Backpropagates loss gradients given with respect to the emitted
    /// features and the classifier weights.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        d_features: &RealMatrix,
        d_classifier: RealMatrix,
    ) -> Gradients {
        let raw = pass.activations.last().unwrap();
        let mut d_act = if self.l2_normalize_features {
            l2_normalize_backward(raw, &pass.features, d_features, self.l2_epsilon)
        } else {
            d_features.clone()
        };
        let mut grads = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let pre = &pass.pre_activations[k];
            let d_pre = RealMatrix::from_vec(
                pre.rows(),
                pre.cols(),
                pre.as_slice()
                    .iter()
                    .zip(d_act.as_slice())
                    .map(|(&x, &g)| g * self.activation.derivative(x))
                    .collect(),
            );
            let d_w = d_pre.t_matmul(&pass.activations[k]);
            let d_b = d_pre.column_mean().iter().map(|m| m * d_pre.rows() as f64).collect();
            if k > 0 {
                d_act = d_pre.matmul(&layer.weights);
            }
            grads.push(DenseLayer {
                weights: d_w,
                bias: d_b,
            });
        }
        grads.reverse();
        Gradients {
            layers: grads,
            classifier: d_classifier,
        }
    }

    /// Every trainable value in a fixed order: per hidden layer weights then
    /// bias, then the classifier.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(self.classifier.as_slice());
        out
    }

    /// Inverse of [`parameters`](Self::parameters).
    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameters().len() {
            return Err(Error::invalid("parameter count mismatch"));
        }
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = &values[pos..pos + n];
            pos += n;
            s.to_vec()
        };
        for l in &mut self.layers {
            let (r, c) = l.weights.shape();
            l.weights = RealMatrix::new(r, c, take(r * c))?;
            l.bias = take(r);
        }
        let (r, c) = self.classifier.shape();
        self.classifier = RealMatrix::new(r, c, take(r * c))?;
        Ok(())
    }

    pub(crate) fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.add_scaled_in_place(-lr, &g.weights);
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        self.classifier.add_scaled_in_place(-lr, &grads.classifier);
        if self.spectral_normalize {
            self.apply_spectral_normalization();
        }
    }

    pub(crate) fn parameters_finite(&self) -> bool {
        self.classifier.is_finite()
            && self
                .layers
                .iter()
                .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Runs `spectral_iterations` power-iteration sweeps per hidden layer with
    /// the persistent vectors, then rescales any layer whose estimated top
    /// singular value exceeds one.
    pub(crate) fn apply_spectral_normalization(&mut self) {
        for (layer, u) in self.layers.iter_mut().zip(self.spectral_u.iter_mut()) {
            let sigma = power_iteration(&layer.weights, u, self.spectral_iterations);
            if sigma > 1.0 {
                layer.weights = layer.weights.scaled(1.0 / sigma);
            }
        }
    }

    /// Current top-singular-value estimates, one sweep from the persistent
    /// vectors, without touching the model.
    pub fn spectral_estimates(&self) -> Vec<f64> {
        self.layers
            .iter()
            .zip(&self.spectral_u)
            .map(|(l, u)| power_iteration(&l.weights, &mut u.clone(), 1))
            .collect()
    }
}

/// `iterations` sweeps of `v ← Wᵀu/‖Wᵀu‖, u ← Wv/‖Wv‖`; returns `uᵀWv`.
pub fn power_iteration(w: &RealMatrix, u: &mut Vec<f64>, iterations: usize) -> f64 {
    let mut v = vec![0.0; w.cols()];
    for _ in 0..iterations.max(1) {
        v = w.t_mat_vec(u);
        let nv = norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let wu = w.mat_vec(&v);
        let nu = norm(&wu);
        if nu == 0.0 {
            return 0.0;
        }
        *u = wu.into_iter().map(|x| x / nu).collect();
    }
    dot(u, &w.mat_vec(&v))
}

/// Vector-Jacobian product of `z ↦ z / max(‖z‖, ε)` row by row. At
/// `‖z‖ = ε` the normalizing branch is used.
pub fn l2_normalize_backward(
    raw: &RealMatrix,
    normalized: &RealMatrix,
    upstream: &RealMatrix,
    epsilon: f64,
) -> RealMatrix {
    let mut out = upstream.clone();
    for i in 0..raw.rows() {
        let n = norm(raw.row(i));
        let g = out.row_mut(i);
        if n >= epsilon {
            let unit = normalized.row(i);
            let proj = dot(unit, g);
            for (gi, ui) in g.iter_mut().zip(unit) {
                *gi = (*gi - ui * proj) / n;
            }
        } else {
            g.iter_mut().for_each(|x| *x /= epsilon);
        }
    }
    out
}
