//! L2 regression onto log-density targets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::Regressor;
use crate::net::{self, init_parameters, NetworkSpec};
use crate::Tensor;

use super::gan::gather_rows;
use super::{adam_step, derive_seed, AdamParams, AdamState, TrainingConfig};

const TAG_INIT_REG: u64 = 10;
const TAG_SHUFFLE_REG: u64 = 11;

/// Mean squared training error per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegressorReport {
    pub epoch_mse: Vec<f64>,
}

/// Fit `arch` to map `inputs[i] -> targets[i]` under mean squared error.
///
/// The output head must be linear (unsquashed): targets are log-densities
/// and can take any sign and magnitude. Non-finite targets are rejected
/// before any training happens.
pub fn train_regressor(
    inputs: &Tensor,
    targets: &[f64],
    arch: &NetworkSpec,
    cfg: &TrainingConfig,
) -> Result<(Regressor, RegressorReport)> {
    cfg.validate()?;
    if inputs.rank() != 2 {
        return Err(Error::shape(format!(
            "regressor inputs must be [count, dim], got shape {:?}",
            inputs.shape()
        )));
    }
    let n = inputs.shape()[0];
    if n == 0 {
        return Err(Error::data("regressor training set is empty"));
    }
    if targets.len() != n {
        return Err(Error::shape(format!(
            "{} inputs but {} targets",
            n,
            targets.len()
        )));
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::data(format!(
            "non-finite regression target at index {i}: {}",
            targets[i]
        )));
    }
    if inputs.feature_dim() != arch.input_dim() {
        return Err(Error::shape(format!(
            "inputs have dim {}, regressor reads dim {}",
            inputs.feature_dim(),
            arch.input_dim()
        )));
    }
    let batch = cfg.batch_size.min(n);

    let mut reg = Regressor::new(
        arch.clone(),
        init_parameters(arch, derive_seed(cfg.seed, TAG_INIT_REG)),
    )?;
    let adam = AdamParams::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut state = AdamState::new(arch);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_SHUFFLE_REG));

    let mut indices: Vec<usize> = (0..n).collect();
    let mut report = RegressorReport::default();
    for _epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut sse = 0.0;
        let mut seen = 0usize;
        for chunk in indices.chunks_exact(batch) {
            let x = gather_rows(inputs, chunk);
            let (pred, trace) = reg.forward_trace(&x)?;
            let b = chunk.len() as f64;
            let mut grad = Tensor::zeros(vec![chunk.len(), 1]);
            for (j, &i) in chunk.iter().enumerate() {
                let e = pred.as_slice()[j] - targets[i];
                sse += e * e;
                grad.as_mut_slice()[j] = 2.0 * e / b;
            }
            seen += chunk.len();
            let spec = reg.spec().clone();
            let (_, grads) = net::backward(&spec, reg.params(), &trace, &grad)?;
            adam_step(reg.params_mut(), &grads, &mut state, &adam)?;
        }
        if seen > 0 {
            report.epoch_mse.push(sse / seen as f64);
        }
    }
    Ok((reg, report))
}

/// Coefficient of determination `1 - SS_res / SS_tot`. Errors when the
/// targets have no variance (the statistic is undefined there).
pub fn r_squared(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(Error::shape(format!(
            "r_squared needs equal non-empty slices, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::data("r_squared undefined: targets have zero variance"));
    }
    let ss_res: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}
