//! Minimal dense feed-forward network engine.
//!
//! Exact forward, reverse-mode backward, and per-point Jacobians for small
//! dense architectures. All operations are pure functions of their inputs;
//! parameters are plain data and nothing here touches global state, so
//! evaluation over shared read-only parameters is safe to run concurrently.

mod checkpoint;
mod engine;
mod jacobian;
mod params;

pub use checkpoint::{decode_network, encode_network, load_network, save_network, NetworkFile};
pub use engine::{backward, backward_with_taps, forward, ForwardTrace};
pub use jacobian::{jacobian_analytic, jacobian_finite_diff};
pub use params::{init_parameters, GradientSet, LayerParams, ParameterSet};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Element-wise nonlinearity applied after a dense layer.
///
/// At a ReLU/LeakyReLU kink (pre-activation exactly 0) derivatives use the
/// right-derivative convention: slope 1. This is a measure-zero set, fixed
/// for determinism rather than correctness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Negative-side slope must lie in (0, 1).
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<F: Scalar>(&self, x: F) -> F {
        match self {
            Activation::Relu => {
                if x > F::zero() {
                    x
                } else {
                    F::zero()
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > F::zero() {
                    x
                } else {
                    F::from_f64_c(*slope) * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation value.
    pub fn grad_from_pre<F: Scalar>(&self, pre: F) -> F {
        match self {
            Activation::Relu => {
                if pre >= F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::LeakyRelu(slope) => {
                if pre >= F::zero() {
                    F::one()
                } else {
                    F::from_f64_c(*slope)
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                F::one() - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(pre);
                s * (F::one() - s)
            }
            Activation::Identity => F::one(),
        }
    }

    /// Distance from the nearest non-differentiable point of the activation,
    /// or `None` for everywhere-smooth activations.
    pub fn kink_distance<F: Scalar>(&self, pre: F) -> Option<F> {
        match self {
            Activation::Relu | Activation::LeakyRelu(_) => Some(pre.abs()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Activation::LeakyRelu(slope) = self {
            if !(*slope > 0.0 && *slope < 1.0) {
                return Err(Error::config(format!(
                    "leaky-relu slope must lie in (0, 1), got {slope}"
                )));
            }
        }
        Ok(())
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// One dense layer: output width and activation. The input width is the
/// previous layer's output width (or the network input dimension).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            out_dim,
            activation,
        }
    }
}

/// Architecture of a feed-forward map. Layer widths chain from `input_dim`,
/// so adjacent layers cannot disagree by construction; validation rejects
/// zero widths, empty layer lists, and out-of-range activation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    input_dim: usize,
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::config("network input_dim must be >= 1"));
        }
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.out_dim == 0 {
                return Err(Error::config(format!("layer {i} has out_dim 0")));
            }
            layer.activation.validate()?;
        }
        Ok(NetworkSpec { input_dim, layers })
    }

    /// Convenience constructor: hidden widths with one shared activation,
    /// then an output layer of width `out_dim` with `out_activation`.
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        hidden_activation: Activation,
        out_dim: usize,
        out_activation: Activation,
    ) -> Result<Self> {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&w| LayerSpec::new(w, hidden_activation))
            .collect();
        layers.push(LayerSpec::new(out_dim, out_activation));
        NetworkSpec::new(input_dim, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    /// Input width of layer `k`.
    pub fn layer_input_dim(&self, k: usize) -> usize {
        if k == 0 {
            self.input_dim
        } else {
            self.layers[k - 1].out_dim
        }
    }
}
