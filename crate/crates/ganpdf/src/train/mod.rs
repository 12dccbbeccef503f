//! Optimization and training loops: Adam, the adversarial losses, the
//! latent-reconstruction penalty, and the L2 regressor fit.

mod adam;
mod gan;
mod losses;
mod regressor;

pub use adam::{adam_step, AdamParams, AdamState};
pub use gan::{train_gan, GanArch};
pub use losses::{
    d_loss_from_logits, d_loss_grads, g_loss_from_logits, g_loss_grads, gan_losses,
    infogan_grad, infogan_loss, log_sigmoid, sigmoid, softplus, GanLossValues, LossVariant,
};
pub use regressor::{r_squared, train_regressor, RegressorReport};

use std::io::Write as IoWrite;

use crate::error::{Error, Result};

/// Hyperparameters shared by the adversarial and regressor loops.
///
/// All range constraints are checked by [`TrainingConfig::validate`], which
/// every training entry point calls first.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the latent-reconstruction penalty; 0 disables the Q path.
    pub lambda_mi: f64,
    pub seed: u64,
    pub loss_variant: LossVariant,
}

impl TrainingConfig {
    /// Adversarial-loop defaults: Adam(2e-4, 0.5, 0.999), batch 64.
    pub fn gan_defaults(seed: u64) -> Self {
        TrainingConfig {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 1,
            lambda_mi: 1.0,
            seed,
            loss_variant: LossVariant::NonSaturating,
        }
    }

    /// Regressor defaults: same Adam betas at learning rate 1e-4.
    pub fn regressor_defaults(seed: u64) -> Self {
        TrainingConfig {
            learning_rate: 1e-4,
            ..TrainingConfig::gan_defaults(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(self.lambda_mi.is_finite() && self.lambda_mi >= 0.0) {
            return Err(Error::config(format!(
                "lambda_mi must be nonnegative, got {}",
                self.lambda_mi
            )));
        }
        Ok(())
    }
}

/// One training step's losses, as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub mi_penalty: f64,
    /// Wall-clock milliseconds since the Unix epoch when the step finished.
    pub unix_time_ms: u128,
}

/// Per-step loss log of one adversarial training run. Records hold finite
/// values and ascend by step; a tripped divergence detector stops the run
/// and stamps the offending step instead of appending it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossReport {
    pub records: Vec<LossRecord>,
    pub diverged_at: Option<usize>,
}

impl LossReport {
    pub fn push(&mut self, step: usize, d_loss: f64, g_loss: f64, mi_penalty: f64) {
        let unix_time_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        self.records.push(LossRecord {
            step,
            d_loss,
            g_loss,
            mi_penalty,
            unix_time_ms,
        });
    }

    /// CSV with one row per step.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,d_loss,g_loss,mi_penalty,unix_time_ms")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{}",
                r.step, r.d_loss, r.g_loss, r.mi_penalty, r.unix_time_ms
            )?;
        }
        Ok(())
    }
}

/// SplitMix64-style derivation of independent component seeds from one run
/// seed, so adding or removing one consumer (e.g. the Q network) never
/// shifts another component's stream.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut x = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
