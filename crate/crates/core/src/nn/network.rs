use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::graph::{Gradients, Graph, Var};
use crate::nn::kernels;
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
    Softmax,
}

/// Fully connected layer `act(W·x + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::InvalidTensor(format!(
                "weights must be a matrix, got shape {:?}",
                weights.shape()
            )));
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(Error::ShapeMismatch {
                context: "dense bias",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// He-uniform weights for ReLU layers, Glorot-uniform otherwise; zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = match activation {
            Activation::Relu => (6.0 / in_dim as f64).sqrt(),
            _ => (6.0 / (in_dim + out_dim) as f64).sqrt(),
        };
        let data = (0..in_dim * out_dim).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            weights: Tensor::new(vec![out_dim, in_dim], data).expect("sized above"),
            bias: Tensor::zeros(vec![out_dim]),
            activation,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Tensor::zeros(vec![out_dim, in_dim]),
            bias: Tensor::zeros(vec![out_dim]),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }
}

/// One layer of an architecture descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    layers: Vec<DenseLayer>,
    frozen: bool,
}

/// Graph handles for the parameters of a [`Network`] bound to a [`Graph`].
#[derive(Debug, Clone)]
pub struct BoundNetwork {
    params: Vec<(Var, Var)>,
    activations: Vec<Activation>,
}

impl Network {
    pub fn new(name: impl Into<String>, layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    context: "layer chaining",
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            layers,
            frozen: false,
        })
    }

    /// Randomly initialised MLP: `widths` lists `(out_dim, activation)` per layer.
    pub fn init<R: Rng + ?Sized>(
        name: impl Into<String>,
        input_dim: usize,
        widths: &[(usize, Activation)],
        rng: &mut R,
    ) -> Self {
        let mut in_dim = input_dim;
        let layers = widths
            .iter()
            .map(|&(out, act)| {
                let layer = DenseLayer::init(in_dim, out, act, rng);
                in_dim = out;
                layer
            })
            .collect();
        Self::new(name, layers).expect("widths chain by construction")
    }

    pub fn from_specs(name: impl Into<String>, specs: &[LayerSpec]) -> Result<Self> {
        Self::new(
            name,
            specs
                .iter()
                .map(|s| DenseLayer::zeros(s.in_dim, s.out_dim, s.activation))
                .collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec {
                in_dim: l.in_dim(),
                out_dim: l.out_dim(),
                activation: l.activation,
            })
            .collect()
    }

    /// Parameter tensors in canonical order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "flat parameters",
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Flattened gradients in parameter order; zeros where none accumulated.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.params()
            .flat_map(|t| match t.grad() {
                Some(g) => g.to_vec(),
                None => vec![0.0; t.len()],
            })
            .collect()
    }

    /// SHA-256 over the little-endian bytes of every parameter.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in self.params() {
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Inference without recording a graph.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (batch, width) = (input.rows(), input.cols());
        if width != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: width,
            });
        }
        let mut h = input.data().to_vec();
        for layer in &self.layers {
            let z = kernels::linear(&h, layer.weights.data(), layer.bias.data(), batch, layer.in_dim(), layer.out_dim());
            h = match layer.activation {
                Activation::Relu => kernels::relu(&z),
                Activation::Sigmoid => kernels::sigmoid(&z),
                Activation::Linear => z,
                Activation::Softmax => kernels::softmax_rows(&z, layer.out_dim()),
            };
        }
        Tensor::matrix(batch, self.output_dim(), h)
    }

    /// Puts the parameters on `g` as gradient-tracking leaves.
    pub fn bind(&self, g: &mut Graph) -> BoundNetwork {
        self.bind_with(g, true)
    }

    /// Puts the parameters on `g` as constants: gradients still flow to the
    /// network input, but no parameter gradients are computed.
    pub fn bind_constant(&self, g: &mut Graph) -> BoundNetwork {
        self.bind_with(g, false)
    }

    fn bind_with(&self, g: &mut Graph, track: bool) -> BoundNetwork {
        BoundNetwork {
            params: self
                .layers
                .iter()
                .map(|l| (g.leaf(&l.weights, track), g.leaf(&l.bias, track)))
                .collect(),
            activations: self.layers.iter().map(|l| l.activation).collect(),
        }
    }

    /// Adds the gradients of a bound copy into each parameter's grad buffer.
    pub fn accumulate_grads(&mut self, bound: &BoundNetwork, grads: &Gradients) {
        for (layer, &(w, b)) in self.layers.iter_mut().zip(&bound.params) {
            if let Some(gw) = grads.get(w) {
                layer.weights.accumulate_grad(gw);
            }
            if let Some(gb) = grads.get(b) {
                layer.bias.accumulate_grad(gb);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.params_mut().for_each(Tensor::zero_grad);
    }
}

impl BoundNetwork {
    pub fn forward(&self, g: &mut Graph, input: Var) -> Result<Var> {
        let mut h = input;
        for (&(w, b), &act) in self.params.iter().zip(&self.activations) {
            let z = g.linear(h, w, b)?;
            h = match act {
                Activation::Relu => g.relu(z),
                Activation::Sigmoid => g.sigmoid(z),
                Activation::Linear => z,
                Activation::Softmax => g.softmax(z),
            };
        }
        Ok(h)
    }

    pub fn param_vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.params.iter().flat_map(|&(w, b)| [w, b])
    }
}
