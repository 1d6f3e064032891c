//! Dense feed-forward classifiers trained from scratch.
//!
//! Two architectures share one implementation: the main task classifier
//! (three ReLU hidden layers) and the binary discriminator used by DAL and
//! CAL (one ReLU hidden layer, two outputs). Weights are stored `in x out`
//! so a batch forward step is `X · W + b`.
//!
//! Dropout is applied after every hidden activation with inverted scaling,
//! so evaluation mode is a plain deterministic pass.

mod adamw;
mod train;

pub use adamw::{AdamWConfig, AdamWState};
pub use train::{fit_epoch, mc_dropout_passes, mc_dropout_predict, train_epoch, EpochOutcome};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Task classifier, three hidden layers.
    Main,
    /// Discriminator, one hidden layer, two classes.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub classes: usize,
    pub dropout: f64,
}

impl MlpConfig {
    pub fn main(input_dim: usize, classes: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden_width: 300,
            hidden_layers: 3,
            classes,
            dropout: 0.3,
        }
    }

    pub fn binary(input_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden_width: 300,
            hidden_layers: 1,
            classes: 2,
            dropout: 0.0,
        }
    }

    pub fn architecture(&self) -> Architecture {
        if self.hidden_layers == 1 && self.classes == 2 {
            Architecture::Binary
        } else {
            Architecture::Main
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidArgument(
                "layer dimensions must be positive".into(),
            ));
        }
        if self.hidden_layers == 0 {
            return Err(Error::InvalidArgument(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// One affine layer, `weight` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut SimRng) -> Self {
        // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let weight = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng));
        let bias = Array1::from_shape_fn(fan_out, |_| dist.sample(rng));
        Dense { weight, bias }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Row-stochastic matrix of class probabilities, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    probs: Array2<f64>,
}

impl PredictiveDistribution {
    pub fn new(probs: Array2<f64>) -> Self {
        let probs = if probs.is_standard_layout() {
            probs
        } else {
            probs.as_standard_layout().into_owned()
        };
        PredictiveDistribution { probs }
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn into_probs(self) -> Array2<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    pub fn classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.probs.ncols();
        let data = self.probs.as_slice().expect("standard layout");
        &data[i * c..(i + 1) * c]
    }

    /// Predicted label, ties broken toward the lowest class index.
    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    pub fn predictions(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.argmax(i)).collect()
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = j;
        }
    }
    best
}

/// Per-layer gradients, same shapes as the model's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    config: MlpConfig,
    layers: Vec<Dense>,
}

struct ForwardCache {
    /// Inputs of every layer (the batch itself, then each hidden output after dropout).
    inputs: Vec<Array2<f64>>,
    /// `relu'(z) * dropout scale` for every hidden layer.
    gates: Vec<Array2<f64>>,
    probs: Array2<f64>,
    logits: Array2<f64>,
}

impl MlpModel {
    pub fn new(config: MlpConfig, rng: &mut SimRng) -> Result<Self> {
        config.validate()?;
        let layers = Self::init_layers(&config, rng);
        Ok(MlpModel { config, layers })
    }

    /// Builds a model from explicit layers, checking that shapes chain.
    pub fn from_layers(config: MlpConfig, layers: Vec<Dense>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.hidden_layers + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} layers, got {}",
                config.hidden_layers + 1,
                layers.len()
            )));
        }
        let mut expected = config.input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.in_dim() != expected {
                return Err(Error::Shape {
                    layer: format!("layer {l}"),
                    expected,
                    actual: layer.in_dim(),
                });
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape {
                    layer: format!("layer {l} bias"),
                    expected: layer.out_dim(),
                    actual: layer.bias.len(),
                });
            }
            expected = layer.out_dim();
        }
        if expected != config.classes {
            return Err(Error::Shape {
                layer: "output layer".into(),
                expected: config.classes,
                actual: expected,
            });
        }
        Ok(MlpModel { config, layers })
    }

    fn init_layers(config: &MlpConfig, rng: &mut SimRng) -> Vec<Dense> {
        let mut layers = Vec::with_capacity(config.hidden_layers + 1);
        let mut fan_in = config.input_dim;
        for _ in 0..config.hidden_layers {
            layers.push(Dense::init(fan_in, config.hidden_width, rng));
            fan_in = config.hidden_width;
        }
        layers.push(Dense::init(fan_in, config.classes, rng));
        layers
    }

    /// Re-initializes every parameter from `rng`.
    pub fn reinitialize(&mut self, rng: &mut SimRng) {
        self.layers = Self::init_layers(&self.config, rng);
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn representation_dim(&self) -> usize {
        self.config.hidden_width
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, features: &ArrayView2<f64>) -> Result<()> {
        if features.ncols() != self.config.input_dim {
            return Err(Error::Shape {
                layer: "layer 0 (input)".into(),
                expected: self.config.input_dim,
                actual: features.ncols(),
            });
        }
        Ok(())
    }

    fn forward_cached(
        &self,
        features: ArrayView2<f64>,
        mode: Mode,
        mut rng: Option<&mut SimRng>,
        keep_cache: bool,
    ) -> Result<(ForwardCache, Array2<f64>)> {
        self.check_input(&features)?;
        let p = self.config.dropout;
        let use_dropout = mode == Mode::Train && p > 0.0;
        if use_dropout && rng.is_none() {
            return Err(Error::InvalidArgument(
                "train-mode forward with dropout needs an rng".into(),
            ));
        }
        let keep = 1.0 / (1.0 - p);
        let hidden = self.config.hidden_layers;

        let mut inputs = Vec::with_capacity(hidden + 1);
        let mut gates = Vec::with_capacity(hidden);
        let mut current = features.to_owned();
        for layer in &self.layers[..hidden] {
            let mut z = current.dot(&layer.weight);
            z += &layer.bias;
            let mut gate = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            if use_dropout {
                let rng = rng.as_deref_mut().expect("checked above");
                gate.mapv_inplace(|g| if rng.gen::<f64>() < p { 0.0 } else { g * keep });
            }
            let h = &z * &gate;
            if keep_cache {
                inputs.push(std::mem::replace(&mut current, h));
                gates.push(gate);
            } else {
                current = h;
            }
        }
        let output = &self.layers[hidden];
        let mut logits = current.dot(&output.weight);
        logits += &output.bias;
        let probs = softmax_rows(&logits);
        let last_hidden = if keep_cache {
            inputs.push(current);
            Array2::zeros((0, 0))
        } else {
            current
        };
        Ok((
            ForwardCache {
                inputs,
                gates,
                probs,
                logits,
            },
            last_hidden,
        ))
    }

    /// Class probabilities for a batch.
    pub fn forward(
        &self,
        features: ArrayView2<f64>,
        mode: Mode,
        rng: Option<&mut SimRng>,
    ) -> Result<PredictiveDistribution> {
        let (cache, _) = self.forward_cached(features, mode, rng, false)?;
        Ok(PredictiveDistribution::new(cache.probs))
    }

    /// Class probabilities together with the last hidden activations (Ψ).
    pub fn forward_with_representation(
        &self,
        features: ArrayView2<f64>,
        mode: Mode,
        rng: Option<&mut SimRng>,
    ) -> Result<(PredictiveDistribution, Array2<f64>)> {
        let (cache, hidden) = self.forward_cached(features, mode, rng, false)?;
        Ok((PredictiveDistribution::new(cache.probs), hidden))
    }

    /// Eval-mode post-ReLU output of the last hidden layer.
    pub fn representation(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_with_representation(features, Mode::Eval, None)?.1)
    }

    /// Mean cross-entropy of `labels` and its gradient with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        features: ArrayView2<f64>,
        labels: &[usize],
        mode: Mode,
        rng: Option<&mut SimRng>,
    ) -> Result<(f64, Gradients)> {
        if labels.len() != features.nrows() {
            return Err(Error::Shape {
                layer: "labels".into(),
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        for &y in labels {
            if y >= self.config.classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: self.config.classes,
                });
            }
        }
        let (cache, _) = self.forward_cached(features, mode, rng, true)?;
        let batch = labels.len() as f64;

        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = cache.logits.row(i);
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
            loss += lse - row[y];
        }
        loss /= batch;

        let mut delta = cache.probs;
        for (i, &y) in labels.iter().enumerate() {
            delta[[i, y]] -= 1.0;
        }
        delta /= batch;

        let hidden = self.config.hidden_layers;
        let mut grads: Vec<Dense> = Vec::with_capacity(hidden + 1);
        for l in (0..=hidden).rev() {
            let input = &cache.inputs[l];
            let weight_grad = input.t().dot(&delta);
            let bias_grad = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut upstream = delta.dot(&self.layers[l].weight.t());
                upstream *= &cache.gates[l - 1];
                delta = upstream;
            }
            grads.push(Dense {
                weight: weight_grad,
                bias: bias_grad,
            });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Re-initializes `model` from `rng` and clears the optimizer.
pub fn reset_parameters(model: &mut MlpModel, opt: &mut AdamWState, rng: &mut SimRng) {
    model.reinitialize(rng);
    opt.reset(model);
}
