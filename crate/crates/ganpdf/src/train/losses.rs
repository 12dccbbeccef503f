//! Adversarial and latent-reconstruction losses.
//!
//! Everything is computed from raw logits through `softplus`, so no loss
//! or gradient overflows for any finite logit:
//!
//! ```text
//! -log sigmoid(l)       = softplus(-l)
//! -log(1 - sigmoid(l))  = softplus(l)
//! ```

use crate::error::{Error, Result};
use crate::models::{Discriminator, Generator};
use crate::Tensor;

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log sigmoid(x) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Generator objective flavor. The saddle-point objective reads minimax,
/// but the non-saturating form is the default: minimax stalls when the
/// discriminator wins early, which at small scale is the common case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    Minimax,
    NonSaturating,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanLossValues {
    pub d_loss: f64,
    pub g_loss: f64,
}

fn require_nonempty(what: &str, len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::shape(format!("{what} batch is empty")));
    }
    Ok(())
}

/// `d_loss = -mean log sigmoid(real) - mean log(1 - sigmoid(fake))`.
pub fn d_loss_from_logits(real_logits: &[f64], fake_logits: &[f64]) -> Result<f64> {
    require_nonempty("real", real_logits.len())?;
    require_nonempty("fake", fake_logits.len())?;
    let real: f64 =
        real_logits.iter().map(|&l| softplus(-l)).sum::<f64>() / real_logits.len() as f64;
    let fake: f64 =
        fake_logits.iter().map(|&l| softplus(l)).sum::<f64>() / fake_logits.len() as f64;
    Ok(real + fake)
}

/// Per-logit gradients of [`d_loss_from_logits`].
pub fn d_loss_grads(real_logits: &[f64], fake_logits: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let br = real_logits.len() as f64;
    let bf = fake_logits.len() as f64;
    let real = real_logits.iter().map(|&l| -sigmoid(-l) / br).collect();
    let fake = fake_logits.iter().map(|&l| sigmoid(l) / bf).collect();
    (real, fake)
}

/// Generator loss from fake logits, per variant:
/// non-saturating `-mean log sigmoid(fake)`, minimax `mean log(1 - sigmoid(fake))`.
pub fn g_loss_from_logits(fake_logits: &[f64], variant: LossVariant) -> Result<f64> {
    require_nonempty("fake", fake_logits.len())?;
    let b = fake_logits.len() as f64;
    Ok(match variant {
        LossVariant::NonSaturating => fake_logits.iter().map(|&l| softplus(-l)).sum::<f64>() / b,
        LossVariant::Minimax => -fake_logits.iter().map(|&l| softplus(l)).sum::<f64>() / b,
    })
}

/// Per-logit gradients of [`g_loss_from_logits`].
pub fn g_loss_grads(fake_logits: &[f64], variant: LossVariant) -> Vec<f64> {
    let b = fake_logits.len() as f64;
    match variant {
        LossVariant::NonSaturating => {
            fake_logits.iter().map(|&l| -sigmoid(-l) / b).collect()
        }
        LossVariant::Minimax => fake_logits.iter().map(|&l| -sigmoid(l) / b).collect(),
    }
}

/// Model-level adversarial losses on one real batch and one latent batch.
pub fn gan_losses(
    d: &Discriminator,
    g: &Generator,
    real_batch: &Tensor,
    z_batch: &Tensor,
    variant: LossVariant,
) -> Result<GanLossValues> {
    require_nonempty("real", real_batch.batch_len())?;
    require_nonempty("latent", z_batch.batch_len())?;
    let (fake, _) = g.generate_batch(z_batch)?;
    let (real_logits, _) = d.logits(real_batch)?;
    let (fake_logits, _) = d.logits(&fake)?;
    Ok(GanLossValues {
        d_loss: d_loss_from_logits(real_logits.as_slice(), fake_logits.as_slice())?,
        g_loss: g_loss_from_logits(fake_logits.as_slice(), variant)?,
    })
}

/// Latent-reconstruction penalty `lambda * mean_b |q_b - z_b|^2`.
pub fn infogan_loss(q_out: &Tensor, z: &Tensor, lambda: f64) -> Result<f64> {
    if q_out.shape() != z.shape() {
        return Err(Error::shape(format!(
            "Q output shape {:?} does not match latent shape {:?}",
            q_out.shape(),
            z.shape()
        )));
    }
    require_nonempty("latent", z.batch_len())?;
    let b = z.batch_len() as f64;
    let ssq: f64 = q_out
        .as_slice()
        .iter()
        .zip(z.as_slice())
        .map(|(q, z)| (q - z) * (q - z))
        .sum();
    Ok(lambda * ssq / b)
}

/// Gradient of [`infogan_loss`] with respect to the Q output:
/// `2 lambda (q - z) / batch`.
pub fn infogan_grad(q_out: &Tensor, z: &Tensor, lambda: f64) -> Result<Tensor> {
    if q_out.shape() != z.shape() {
        return Err(Error::shape(format!(
            "Q output shape {:?} does not match latent shape {:?}",
            q_out.shape(),
            z.shape()
        )));
    }
    require_nonempty("latent", z.batch_len())?;
    let b = z.batch_len() as f64;
    let mut grad = q_out.clone();
    for (g, zv) in grad.as_mut_slice().iter_mut().zip(z.as_slice()) {
        *g = 2.0 * lambda * (*g - zv) / b;
    }
    Ok(grad)
}
