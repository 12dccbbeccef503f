//! Latent-space density labels and the latent regressor.
//!
//! Instead of the full change-of-variables density, each generated sample
//! `x = G(z)` can be labeled with the prior log-density of its pre-image,
//! `log p(z)`, with no Jacobian term. A regressor trained on these labels
//! predicts "how typical was the latent code that produced this image" -
//! a quantity that is invariant to reparameterizations of the generator
//! output and empirically much more clustered than the pixel-space
//! density.

use std::collections::HashMap;

use crate::density::DensityTriplet;
use crate::error::{Error, Result};
use crate::models::{GanModelSet, LatentPrior, Regressor};
use crate::net::NetworkSpec;
use crate::train::{train_regressor, RegressorReport, TrainingConfig};
use crate::Tensor;

/// An image paired with the prior log-density of its latent pre-image.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDensityLabel {
    pub x: Vec<f64>,
    pub log_pz: f64,
}

/// Label every triplet with `log p(z)` of its stored pre-image.
///
/// Labels are always derived on the fly from triplets (which persist `z`),
/// never stored separately. By construction a label differs from the
/// triplet's manifold `log_px` by exactly the Jacobian log-determinant
/// term.
pub fn latent_labels_from_triplets(
    triplets: &[DensityTriplet],
    prior: &LatentPrior,
) -> Result<Vec<LatentDensityLabel>> {
    triplets
        .iter()
        .map(|t| {
            Ok(LatentDensityLabel {
                x: t.x.clone(),
                log_pz: prior.log_density(&t.z)?,
            })
        })
        .collect()
}

/// Spread of targets among bit-identical inputs above which training is
/// refused as ill-posed (a single input cannot carry two different
/// labels; a function cannot fit that).
const ILL_POSED_TARGET_SPREAD: f64 = 1e-9;

/// Train an image -> `log p(z)` regressor (L2 loss, unsquashed output;
/// same contract as the pixel-space regressor).
///
/// Degenerate generators make this problem ill-posed: if the same image
/// arises from latents of different prior density, no function of the
/// image can recover the label. Bit-identical inputs whose targets spread
/// more than a hair are therefore rejected up front.
pub fn train_latent_regressor(
    labels: &[LatentDensityLabel],
    arch: &NetworkSpec,
    cfg: &TrainingConfig,
) -> Result<(Regressor, RegressorReport)> {
    if labels.is_empty() {
        return Err(Error::data("latent regressor training set is empty"));
    }
    let dim = labels[0].x.len();
    let mut groups: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
    for l in labels {
        if l.x.len() != dim {
            return Err(Error::shape(format!(
                "inconsistent image dims in labels: {} vs {dim}",
                l.x.len()
            )));
        }
        let key: Vec<u64> = l.x.iter().map(|v| v.to_bits()).collect();
        let e = groups.entry(key).or_insert((l.log_pz, l.log_pz));
        e.0 = e.0.min(l.log_pz);
        e.1 = e.1.max(l.log_pz);
    }
    if let Some((lo, hi)) = groups.values().find(|(lo, hi)| hi - lo > ILL_POSED_TARGET_SPREAD) {
        return Err(Error::data(format!(
            "ill-posed latent regression: identical inputs carry targets \
             spanning [{lo}, {hi}] - the generator is not injective on this set"
        )));
    }

    let mut values = Vec::with_capacity(labels.len() * dim);
    let mut targets = Vec::with_capacity(labels.len());
    for l in labels {
        values.extend_from_slice(&l.x);
        targets.push(l.log_pz);
    }
    let inputs = Tensor::new(vec![labels.len(), dim], values)?;
    train_regressor(&inputs, &targets, arch, cfg)
}

/// Optional evaluation path: estimate `log p(z)` for an arbitrary image by
/// reconstructing the latent code with the Q head (`z_hat = Q(D_feat(x))`)
/// and scoring it under the prior. Requires a model set trained with the
/// mutual-information path.
pub fn q_latent_log_density(set: &GanModelSet, x: &[f64]) -> Result<f64> {
    let q = set
        .qnet
        .as_ref()
        .ok_or_else(|| Error::config("model set has no Q network"))?;
    let batch = Tensor::new(vec![1, x.len()], x.to_vec())?;
    let (_, trace) = set.discriminator.logits(&batch)?;
    let features = trace.layer_output(set.discriminator.feature_layer());
    let (z_hat, _) = q.reconstruct(features)?;
    set.prior.log_density(z_hat.as_slice())
}
