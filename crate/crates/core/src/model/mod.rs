//! The parametric convolutional GNN, its gradients and training loop.
//!
//! A convolution layer computes
//! `Y = (a A_hat H + b H0 + c H_prev)(d W + e I) + bias`
//! followed by ReLU on every layer except the last.

mod network;
mod optim;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::InitScheme;

pub use network::{ForwardCache, GraphBatch, Gradients, ModelState};
pub use optim::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use train::{
    accuracy, auroc, cross_entropy, evaluate, train, EpochRecord, Masks, Metric, TrainReport,
};

pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_L2: f64 = 5e-4;
pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_EPOCHS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    /// Graph convolution with the five mixing coefficients.
    Conv,
    /// Plain `H W + bias`, used for input projections and the graph-level head.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub width_in: usize,
    pub width_out: usize,
    #[serde(default = "default_true")]
    pub has_bias: bool,
    /// Overrides the model-wide initializer for this layer.
    #[serde(default)]
    pub init: Option<InitScheme>,
}

fn default_true() -> bool {
    true
}

impl LayerSpec {
    pub fn gcn(width_in: usize, width_out: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 1.0,
            epsilon: 0.0,
            width_in,
            width_out,
            has_bias: true,
            init: None,
        }
    }

    /// GCNII layer at 1-based depth `l`: `delta = lambda_h / l`.
    pub fn gcnii(l: usize, lambda_h: f64, width: usize) -> Self {
        let delta = lambda_h / l.max(1) as f64;
        Self {
            alpha: 0.9,
            beta: 0.1,
            delta,
            epsilon: 1.0 - delta,
            ..Self::gcn(width, width)
        }
    }

    pub fn linear(width_in: usize, width_out: usize) -> Self {
        Self {
            kind: LayerKind::Linear,
            alpha: 0.0,
            delta: 1.0,
            ..Self::gcn(width_in, width_out)
        }
    }

    pub fn with_coefficients(mut self, alpha: f64, beta: f64, gamma: f64, delta: f64, epsilon: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self.gamma = gamma;
        self.delta = delta;
        self.epsilon = epsilon;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    NodeClassification,
    GraphClassification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
    pub activation: Activation,
    pub task: Task,
    /// Pooling applied before the final layer of a graph-classification model.
    pub readout: Readout,
    pub init: InitScheme,
    pub l2_penalty: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl ModelConfig {
    fn with_layers(layers: Vec<LayerSpec>, task: Task, init: InitScheme) -> Self {
        Self {
            layers,
            activation: Activation::Relu,
            task,
            readout: Readout::Mean,
            init,
            l2_penalty: DEFAULT_L2,
            learning_rate: DEFAULT_LR,
            epochs: DEFAULT_EPOCHS,
        }
    }

    /// `depth` GCN layers: `in_dim -> hidden -> ... -> classes`.
    pub fn gcn(in_dim: usize, hidden: usize, classes: usize, depth: usize, init: InitScheme) -> Self {
        let layers = (0..depth)
            .map(|l| {
                let a = if l == 0 { in_dim } else { hidden };
                let b = if l + 1 == depth { classes } else { hidden };
                LayerSpec::gcn(a, b)
            })
            .collect();
        Self::with_layers(layers, Task::NodeClassification, init)
    }

    /// Input projection, `depth` GCNII layers, linear output.
    pub fn gcnii(
        in_dim: usize,
        hidden: usize,
        classes: usize,
        depth: usize,
        lambda_h: f64,
        init: InitScheme,
    ) -> Self {
        let mut layers = vec![LayerSpec::linear(in_dim, hidden)];
        layers.extend((1..=depth).map(|l| LayerSpec::gcnii(l, lambda_h, hidden)));
        layers.push(LayerSpec::linear(hidden, classes));
        Self::with_layers(layers, Task::NodeClassification, init)
    }

    /// `conv_layers` GCN layers, mean readout, then a linear head.
    pub fn gcn_graph(
        in_dim: usize,
        hidden: usize,
        classes: usize,
        conv_layers: usize,
        init: InitScheme,
    ) -> Self {
        let mut layers: Vec<LayerSpec> = (0..conv_layers)
            .map(|l| LayerSpec::gcn(if l == 0 { in_dim } else { hidden }, hidden))
            .collect();
        let head_in = if conv_layers == 0 { in_dim } else { hidden };
        layers.push(LayerSpec::linear(head_in, classes));
        Self::with_layers(layers, Task::GraphClassification, init)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.width_in)
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width_out)
    }

    pub fn layer_init(&self, l: usize) -> InitScheme {
        self.layers[l].init.unwrap_or(self.init)
    }

    /// Index of the layer whose input serves as `H0` for the residual term:
    /// the output of the leading linear layers, or the raw features.
    pub fn residual_base(&self) -> usize {
        self.layers
            .iter()
            .position(|l| l.kind != LayerKind::Linear)
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::param("model needs at least one layer"));
        }
        for (l, spec) in self.layers.iter().enumerate() {
            if spec.width_in == 0 || spec.width_out == 0 {
                return Err(Error::param(format!("layer {l} has a zero width")));
            }
            let coeffs = [spec.alpha, spec.beta, spec.gamma, spec.delta, spec.epsilon];
            if coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::param(format!("layer {l} has a non-finite coefficient")));
            }
            if l > 0 && self.layers[l - 1].width_out != spec.width_in {
                return Err(Error::shape(format!(
                    "layer {} outputs width {} but layer {l} expects {}",
                    l - 1,
                    self.layers[l - 1].width_out,
                    spec.width_in
                )));
            }
            if spec.kind == LayerKind::Conv {
                if spec.epsilon != 0.0 && spec.width_in != spec.width_out {
                    return Err(Error::shape(format!(
                        "layer {l}: epsilon != 0 needs a square layer, got {}x{}",
                        spec.width_in, spec.width_out
                    )));
                }
                let base = self.residual_base();
                if spec.beta != 0.0 && self.layers[base].width_in != spec.width_in {
                    return Err(Error::shape(format!(
                        "layer {l}: beta != 0 needs input width {} to match H0",
                        self.layers[base].width_in
                    )));
                }
                if spec.gamma != 0.0 && l > 0 && self.layers[l - 1].width_in != spec.width_in {
                    return Err(Error::shape(format!(
                        "layer {l}: gamma != 0 needs the previous input width to match"
                    )));
                }
            }
        }
        if self.task == Task::GraphClassification
            && self.layers.last().map(|l| l.kind) != Some(LayerKind::Linear)
        {
            return Err(Error::param("graph classification needs a linear final layer after the readout"));
        }
        if !(self.l2_penalty >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::param("l2_penalty must be >= 0 and learning_rate > 0"));
        }
        Ok(())
    }
}
