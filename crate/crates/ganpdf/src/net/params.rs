//! Parameter and gradient storage for the dense network engine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::NetworkSpec;

/// Weights and bias of one dense layer. `weights` is row-major
/// `out_dim x in_dim`, so row `o` holds the fan-in of output unit `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> LayerParams<F> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LayerParams {
            in_dim,
            out_dim,
            weights: vec![F::zero(); in_dim * out_dim],
            bias: vec![F::zero(); out_dim],
        }
    }

    pub fn weight(&self, out: usize, inp: usize) -> F {
        self.weights[out * self.in_dim + inp]
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|v| v.is_finite()) && self.bias.iter().all(|v| v.is_finite())
    }
}

/// All layer parameters of one network, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<F> {
    pub layers: Vec<LayerParams<F>>,
}

/// Gradients with the exact same layout as [`ParameterSet`].
pub type GradientSet<F> = ParameterSet<F>;

impl<F: Scalar> ParameterSet<F> {
    /// Zero-filled parameters shaped for `spec`; also the gradient
    /// accumulator constructor.
    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        let layers = (0..spec.num_layers())
            .map(|k| LayerParams::zeros(spec.layer_input_dim(k), spec.layers()[k].out_dim))
            .collect();
        ParameterSet { layers }
    }

    /// Check that this set matches `spec` layer for layer.
    pub fn congruent_with(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.num_layers() {
            return Err(Error::shape(format!(
                "parameter set has {} layers, spec has {}",
                self.layers.len(),
                spec.num_layers()
            )));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let (want_in, want_out) = (spec.layer_input_dim(k), spec.layers()[k].out_dim);
            if layer.in_dim != want_in || layer.out_dim != want_out {
                return Err(Error::shape(format!(
                    "layer {k} is {}x{}, spec wants {}x{}",
                    layer.out_dim, layer.in_dim, want_out, want_in
                )));
            }
            if layer.weights.len() != want_in * want_out || layer.bias.len() != want_out {
                return Err(Error::shape(format!(
                    "layer {k} buffer lengths do not match its declared dims"
                )));
            }
        }
        Ok(())
    }

    /// Element-wise `self += rhs * scale`. Layouts must match.
    pub fn add_scaled(&mut self, rhs: &ParameterSet<F>, scale: F) -> Result<()> {
        if self.layers.len() != rhs.layers.len() {
            return Err(Error::shape("add_scaled: layer count mismatch"));
        }
        for (a, b) in self.layers.iter_mut().zip(rhs.layers.iter()) {
            if a.weights.len() != b.weights.len() || a.bias.len() != b.bias.len() {
                return Err(Error::shape("add_scaled: layer size mismatch"));
            }
            for (x, y) in a.weights.iter_mut().zip(b.weights.iter()) {
                *x += *y * scale;
            }
            for (x, y) in a.bias.iter_mut().zip(b.bias.iter()) {
                *x += *y * scale;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.all_finite())
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}

/// Deterministic initialization: weights drawn from N(0, 0.02) and biases
/// zero, using a ChaCha8 stream seeded from `seed`. Identical
/// (spec, seed) pairs produce identical parameters on every platform.
///
/// Draws happen in f64 and are then converted, so the value stream does not
/// depend on the scalar type's precision.
pub fn init_parameters<F: Scalar>(spec: &NetworkSpec, seed: u64) -> ParameterSet<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, 0.02).expect("fixed std is valid");
    let mut params = ParameterSet::zeros_like(spec);
    for layer in &mut params.layers {
        for w in &mut layer.weights {
            *w = F::from_f64_c(normal.sample(&mut rng));
        }
        // Biases stay zero.
    }
    params
}
