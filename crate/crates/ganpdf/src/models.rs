//! Model roles: latent prior, generator, discriminator, Q-network, and
//! density regressor.
//!
//! Each role wraps a [`NetworkSpec`] plus a [`ParameterSet`] and enforces
//! its structural contract at construction (a generator may not compress,
//! a discriminator and a regressor emit one logit/value, a Q-network must
//! plug onto the discriminator's feature layer), so downstream code never
//! has to re-check shapes.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net::{self, load_network, save_network, NetworkSpec};
use crate::{ForwardTrace, Mat, ParameterSet, Tensor};

/// Standard-normal prior N(0, I_n) on the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPrior {
    dim: usize,
}

impl LatentPrior {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("latent dimension must be >= 1"));
        }
        Ok(LatentPrior { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One latent draw.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// A `[count, dim]` batch of latent draws.
    pub fn sample_batch(&self, count: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let values = (0..count * self.dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Tensor::new(vec![count, self.dim], values).expect("shape matches draw count")
    }

    /// `log p(z) = -(n/2) log(2 pi) - |z|^2 / 2`.
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::shape(format!(
                "latent point has dim {}, prior has dim {}",
                z.len(),
                self.dim
            )));
        }
        let n = self.dim as f64;
        let ssq: f64 = z.iter().map(|v| v * v).sum();
        Ok(-0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * ssq)
    }
}

/// The generative map `G: R^n -> R^m`. Construction rejects `m < n`: a
/// compressing map has no n-dimensional image volume to push density onto.
#[derive(Debug, Clone)]
pub struct Generator {
    spec: NetworkSpec,
    params: ParameterSet,
}

impl Generator {
    pub fn new(spec: NetworkSpec, params: ParameterSet) -> Result<Self> {
        params.congruent_with(&spec)?;
        if spec.output_dim() < spec.input_dim() {
            return Err(Error::config(format!(
                "generator maps {} -> {}: output dim must be >= latent dim",
                spec.input_dim(),
                spec.output_dim()
            )));
        }
        Ok(Generator { spec, params })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// `G(z)` for a single latent point.
    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (y, _) = net::forward(&self.spec, &self.params, &Tensor::vector(z.to_vec()))?;
        Ok(y.into_values())
    }

    /// `G` applied row-wise to a `[batch, n]` tensor, with the trace kept
    /// for backpropagation.
    pub fn generate_batch(&self, z: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        net::forward(&self.spec, &self.params, z)
    }

    /// Exact Jacobian `dG/dz` at `z`, shaped `m x n`.
    pub fn jacobian(&self, z: &[f64]) -> Result<Mat> {
        net::jacobian_analytic(&self.spec, &self.params, z)
    }
}

/// Discriminator `D: R^m -> R`, emitting one raw logit. `feature_layer`
/// names the interior layer whose post-activation serves as the shared
/// feature for the Q-network head.
#[derive(Debug, Clone)]
pub struct Discriminator {
    spec: NetworkSpec,
    params: ParameterSet,
    feature_layer: usize,
}

impl Discriminator {
    pub fn new(spec: NetworkSpec, params: ParameterSet, feature_layer: usize) -> Result<Self> {
        params.congruent_with(&spec)?;
        if spec.output_dim() != 1 {
            return Err(Error::config(format!(
                "discriminator must emit a single logit, got output dim {}",
                spec.output_dim()
            )));
        }
        if feature_layer >= spec.num_layers() {
            return Err(Error::config(format!(
                "feature layer {feature_layer} out of range for {} layers",
                spec.num_layers()
            )));
        }
        Ok(Discriminator {
            spec,
            params,
            feature_layer,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn feature_layer(&self) -> usize {
        self.feature_layer
    }

    /// Width of the shared feature layer.
    pub fn feature_dim(&self) -> usize {
        self.spec.layers()[self.feature_layer].out_dim
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Raw logits for a `[batch, m]` tensor, shaped `[batch, 1]`.
    pub fn logits(&self, x: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        net::forward(&self.spec, &self.params, x)
    }
}

/// Latent-reconstruction head `Q` reading the discriminator's feature
/// layer and predicting the latent code of a generated sample.
#[derive(Debug, Clone)]
pub struct QNetwork {
    spec: NetworkSpec,
    params: ParameterSet,
}

impl QNetwork {
    /// `feature_dim` and `latent_dim` come from the discriminator and
    /// prior this head is attached to.
    pub fn new(
        spec: NetworkSpec,
        params: ParameterSet,
        feature_dim: usize,
        latent_dim: usize,
    ) -> Result<Self> {
        params.congruent_with(&spec)?;
        if spec.input_dim() != feature_dim {
            return Err(Error::config(format!(
                "Q-network reads dim {}, discriminator feature layer has dim {feature_dim}",
                spec.input_dim()
            )));
        }
        if spec.output_dim() != latent_dim {
            return Err(Error::config(format!(
                "Q-network emits dim {}, latent space has dim {latent_dim}",
                spec.output_dim()
            )));
        }
        Ok(QNetwork { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Predicted latent codes for a `[batch, feature_dim]` tensor.
    pub fn reconstruct(&self, features: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        net::forward(&self.spec, &self.params, features)
    }
}

/// Density regressor: maps a pixel-space or latent-space point to a
/// predicted log-density value.
#[derive(Debug, Clone)]
pub struct Regressor {
    spec: NetworkSpec,
    params: ParameterSet,
}

impl Regressor {
    pub fn new(spec: NetworkSpec, params: ParameterSet) -> Result<Self> {
        params.congruent_with(&spec)?;
        if spec.output_dim() != 1 {
            return Err(Error::config(format!(
                "regressor must emit a single value, got output dim {}",
                spec.output_dim()
            )));
        }
        Ok(Regressor { spec, params })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Predicted log-density for one point.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let (y, _) = net::forward(&self.spec, &self.params, &Tensor::vector(x.to_vec()))?;
        Ok(y.as_slice()[0])
    }

    /// Predictions for a `[batch, dim]` tensor, returned as a flat vector.
    pub fn predict_batch(&self, x: &Tensor) -> Result<Vec<f64>> {
        let (y, _) = net::forward(&self.spec, &self.params, x)?;
        Ok(y.into_values())
    }

    /// Forward pass keeping the trace, for training.
    pub fn forward_trace(&self, x: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        net::forward(&self.spec, &self.params, x)
    }

    pub fn save(&self, path: &Path, role: &str) -> Result<()> {
        save_network(path, &self.spec, &self.params, role, 0)
    }

    /// Load a regressor, checking that the stored role tag matches.
    pub fn load(path: &Path, expected_role: &str) -> Result<Regressor> {
        let file = load_network(path)?;
        if file.role != expected_role {
            return Err(Error::data(format!(
                "checkpoint {} has role '{}', expected '{expected_role}'",
                path.display(),
                file.role
            )));
        }
        Regressor::new(file.spec, file.params)
    }
}

/// The networks produced by one adversarial training run.
#[derive(Debug, Clone)]
pub struct GanModelSet {
    pub prior: LatentPrior,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub qnet: Option<QNetwork>,
}

const GENERATOR_FILE: &str = "generator.net";
const DISCRIMINATOR_FILE: &str = "discriminator.net";
const QNET_FILE: &str = "qnet.net";

/// Write all networks of a model set into `dir` (created if missing),
/// tagging each file with its role. The discriminator's `aux` field
/// records its feature layer.
pub fn save_gan_set(dir: &Path, set: &GanModelSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_network(
        &dir.join(GENERATOR_FILE),
        set.generator.spec(),
        set.generator.params(),
        "generator",
        0,
    )?;
    save_network(
        &dir.join(DISCRIMINATOR_FILE),
        set.discriminator.spec(),
        set.discriminator.params(),
        "discriminator",
        set.discriminator.feature_layer() as u32,
    )?;
    if let Some(q) = &set.qnet {
        save_network(&dir.join(QNET_FILE), q.spec(), q.params(), "qnet", 0)?;
    }
    Ok(())
}

/// Load a model set saved by [`save_gan_set`], re-running all
/// construction-time validation.
pub fn load_gan_set(dir: &Path) -> Result<GanModelSet> {
    let expect_role = |file: &net::NetworkFile, want: &str, name: &str| -> Result<()> {
        if file.role != want {
            return Err(Error::data(format!(
                "{name} has role '{}', expected '{want}'",
                file.role
            )));
        }
        Ok(())
    };

    let g = load_network(&dir.join(GENERATOR_FILE))?;
    expect_role(&g, "generator", GENERATOR_FILE)?;
    let generator = Generator::new(g.spec, g.params)?;
    let prior = LatentPrior::new(generator.latent_dim())?;

    let d = load_network(&dir.join(DISCRIMINATOR_FILE))?;
    expect_role(&d, "discriminator", DISCRIMINATOR_FILE)?;
    let discriminator = Discriminator::new(d.spec, d.params, d.aux as usize)?;

    let q_path = dir.join(QNET_FILE);
    let qnet = if q_path.exists() {
        let q = load_network(&q_path)?;
        expect_role(&q, "qnet", QNET_FILE)?;
        Some(QNetwork::new(
            q.spec,
            q.params,
            discriminator.feature_dim(),
            generator.latent_dim(),
        )?)
    } else {
        None
    };

    Ok(GanModelSet {
        prior,
        generator,
        discriminator,
        qnet,
    })
}
