//! Fully-connected encoder/decoder networks with hand-written backprop.
//!
//! Inputs are batches of column vectors (`features × n`), so each column is
//! processed independently.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One affine layer, `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Dense>,
    activation: Activation,
    activate_output: bool,
}

/// Activations cached by a forward pass for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTape {
    /// `inputs[l]` is the input to layer `l`.
    inputs: Vec<Array2<f64>>,
    /// `pre[l]` is `W_l · inputs[l] + b_l`.
    pre: Vec<Array2<f64>>,
    /// Output of the last layer.
    output: Array2<f64>,
}

impl ForwardTape {
    pub fn batch(&self) -> usize {
        self.output.ncols()
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Latent codes, one column per window.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    pub z: Array2<f64>,
}

impl LatentMatrix {
    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn count(&self) -> usize {
        self.z.ncols()
    }
}

/// Xavier-uniform weights, zero biases. Activation follows every layer;
/// call [`MlpParams::with_linear_output`] for a decoder.
pub fn init_params(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<MlpParams> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "layer dims must have at least two positive entries, got {layer_dims:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_dims
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            Dense {
                weight: Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpParams {
        layers,
        activation,
        activate_output: true,
    })
}

impl MlpParams {
    /// Assemble from explicit layers. Dimensions must chain.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation, activate_output: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for layer in &layers {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::shape("bias", layer.outputs(), layer.bias.len()));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::shape("layer chain", pair[0].outputs(), pair[1].inputs()));
            }
        }
        Ok(Self {
            layers,
            activation,
            activate_output,
        })
    }

    /// Drop the activation after the final layer.
    pub fn with_linear_output(mut self) -> Self {
        self.activate_output = false;
        self
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn activates_output(&self) -> bool {
        self.activate_output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Same shape and flags, all entries zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn activated(&self, layer: usize) -> bool {
        self.activate_output || layer + 1 < self.layers.len()
    }

    /// Run the network on a batch of columns.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardTape)> {
        if input.nrows() != self.input_dim() {
            return Err(Error::shape("network input rows", self.input_dim(), input.nrows()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = input.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut p = layer.weight.dot(&current);
            p += &layer.bias.view().insert_axis(Axis(1));
            let out = if self.activated(l) {
                p.mapv(|x| self.activation.apply(x))
            } else {
                p.clone()
            };
            inputs.push(current);
            pre.push(p);
            current = out;
        }
        let tape = ForwardTape {
            inputs,
            pre,
            output: current.clone(),
        };
        Ok((current, tape))
    }
}

pub fn encode(params: &MlpParams, w: &crate::ingest::WindowMatrix) -> Result<(LatentMatrix, ForwardTape)> {
    let (z, tape) = params.forward(w.data().view())?;
    Ok((LatentMatrix { z }, tape))
}

pub fn decode(params: &MlpParams, z_hat: &LatentMatrix) -> Result<(Array2<f64>, ForwardTape)> {
    params.forward(z_hat.z.view())
}

/// Gradients of `⟨upstream, forward(x)⟩` with respect to the parameters and
/// to the input `x`.
pub fn backward(
    params: &MlpParams,
    tape: &ForwardTape,
    upstream_grad: ArrayView2<f64>,
) -> Result<(MlpParams, Array2<f64>)> {
    if upstream_grad.dim() != tape.output.dim() || tape.inputs.len() != params.layers.len() {
        return Err(Error::shape(
            "upstream gradient",
            tape.output.dim(),
            upstream_grad.dim(),
        ));
    }
    let mut grads = params.zeros_like();
    let mut delta = upstream_grad.to_owned();
    let mut out = tape.output.clone();
    for l in (0..params.layers.len()).rev() {
        if params.activated(l) {
            let act = params.activation;
            ndarray::Zip::from(&mut delta)
                .and(&tape.pre[l])
                .and(&out)
                .for_each(|g, &p, &o| *g *= act.derivative(p, o));
        }
        let input = &tape.inputs[l];
        grads.layers[l].weight = delta.dot(&input.t());
        grads.layers[l].bias = delta.sum_axis(Axis(1));
        delta = params.layers[l].weight.t().dot(&delta);
        out = input.clone();
    }
    Ok((grads, delta))
}
