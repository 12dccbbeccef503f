//! The alternating adversarial training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{Discriminator, GanModelSet, Generator, LatentPrior, QNetwork};
use crate::net::{self, init_parameters, NetworkSpec};
use crate::Tensor;

use super::{
    adam_step, d_loss_from_logits, d_loss_grads, derive_seed, g_loss_from_logits, g_loss_grads,
    infogan_grad, infogan_loss, AdamParams, AdamState, LossReport, TrainingConfig,
};

/// Architectures for one adversarial run. `feature_layer` indexes the
/// discriminator layer whose post-activation feeds the Q head.
#[derive(Debug, Clone)]
pub struct GanArch {
    pub generator: NetworkSpec,
    pub discriminator: NetworkSpec,
    pub feature_layer: usize,
    pub qnet: Option<NetworkSpec>,
}

/// Seed-derivation tags, one per independent random stream.
const TAG_INIT_G: u64 = 1;
const TAG_INIT_D: u64 = 2;
const TAG_INIT_Q: u64 = 3;
const TAG_SHUFFLE: u64 = 4;
const TAG_LATENT: u64 = 5;

/// Train a generator/discriminator pair (and optionally a Q head) on
/// `data`, shaped `[count, m]`.
///
/// One discriminator step then one generator step per batch; when the Q
/// path is active its parameters update in the same step as the
/// generator's, and its gradient reaches the generator through a tap on
/// the discriminator's feature layer. Each component draws from its own
/// seed-derived stream, so disabling the Q path leaves the
/// generator/discriminator trajectory bit-identical.
///
/// A divergence detector watches every step: a non-finite loss or
/// parameter aborts the run, restores the last good parameters, and stamps
/// [`LossReport::diverged_at`] - the returned models are always the last
/// good checkpoint.
pub fn train_gan(
    data: &Tensor,
    arch: &GanArch,
    cfg: &TrainingConfig,
    with_q: bool,
) -> Result<(GanModelSet, LossReport)> {
    cfg.validate()?;
    if data.rank() != 2 || data.batch_len() == 0 {
        return Err(Error::shape(format!(
            "training data must be a non-empty [count, dim] tensor, got shape {:?}",
            data.shape()
        )));
    }
    if data.feature_dim() != arch.generator.output_dim() {
        return Err(Error::shape(format!(
            "data dimension {} does not match generator output dimension {}",
            data.feature_dim(),
            arch.generator.output_dim()
        )));
    }
    let n_data = data.shape()[0];
    let steps_per_epoch = n_data / cfg.batch_size;
    if steps_per_epoch == 0 {
        return Err(Error::config(format!(
            "batch_size {} exceeds dataset size {n_data}",
            cfg.batch_size
        )));
    }

    let generator = Generator::new(
        arch.generator.clone(),
        init_parameters(&arch.generator, derive_seed(cfg.seed, TAG_INIT_G)),
    )?;
    let discriminator = Discriminator::new(
        arch.discriminator.clone(),
        init_parameters(&arch.discriminator, derive_seed(cfg.seed, TAG_INIT_D)),
        arch.feature_layer,
    )?;
    let qnet = if with_q {
        let qspec = arch.qnet.as_ref().ok_or_else(|| {
            Error::config("with_q requires a Q-network architecture".to_string())
        })?;
        Some(QNetwork::new(
            qspec.clone(),
            init_parameters(qspec, derive_seed(cfg.seed, TAG_INIT_Q)),
            discriminator.feature_dim(),
            generator.latent_dim(),
        )?)
    } else {
        None
    };
    let prior = LatentPrior::new(generator.latent_dim())?;
    let mut set = GanModelSet {
        prior,
        generator,
        discriminator,
        qnet,
    };

    let adam = AdamParams::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut g_state = AdamState::new(&arch.generator);
    let mut d_state = AdamState::new(&arch.discriminator);
    let mut q_state = set.qnet.as_ref().map(|q| AdamState::new(q.spec()));

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_SHUFFLE));
    let mut latent_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_LATENT));

    let mut report = LossReport::default();
    let mut indices: Vec<usize> = (0..n_data).collect();
    let use_q = with_q && cfg.lambda_mi > 0.0;
    let mut step = 0usize;

    'train: for _epoch in 0..cfg.epochs {
        indices.shuffle(&mut shuffle_rng);
        for chunk in indices.chunks_exact(cfg.batch_size) {
            step += 1;
            let snapshot = (
                set.generator.params().clone(),
                set.discriminator.params().clone(),
                set.qnet.as_ref().map(|q| q.params().clone()),
            );

            let outcome = train_step(&mut set, data, chunk, cfg, use_q, &adam, &mut g_state,
                &mut d_state, q_state.as_mut(), &mut latent_rng);
            let diverged = match outcome {
                Ok((d_loss, g_loss, mi)) => {
                    let healthy = d_loss.is_finite()
                        && g_loss.is_finite()
                        && mi.is_finite()
                        && set.generator.params().all_finite()
                        && set.discriminator.params().all_finite()
                        && set.qnet.as_ref().map_or(true, |q| q.params().all_finite());
                    if healthy {
                        report.push(step, d_loss, g_loss, mi);
                    }
                    !healthy
                }
                // Shape errors are caller bugs and propagate; numerical
                // rejections (e.g. non-finite gradients) are divergence.
                Err(Error::Numerical(_)) => true,
                Err(other) => return Err(other),
            };
            if diverged {
                *set.generator.params_mut() = snapshot.0;
                *set.discriminator.params_mut() = snapshot.1;
                if let (Some(q), Some(p)) = (set.qnet.as_mut(), snapshot.2) {
                    *q.params_mut() = p;
                }
                report.diverged_at = Some(step);
                break 'train;
            }
        }
    }
    Ok((set, report))
}

/// One D-step plus one G(+Q)-step. Returns `(d_loss, g_loss, mi_penalty)`.
#[allow(clippy::too_many_arguments)]
fn train_step(
    set: &mut GanModelSet,
    data: &Tensor,
    chunk: &[usize],
    cfg: &TrainingConfig,
    use_q: bool,
    adam: &AdamParams<f64>,
    g_state: &mut AdamState<f64>,
    d_state: &mut AdamState<f64>,
    mut q_state: Option<&mut AdamState<f64>>,
    latent_rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, f64)> {
    let batch = chunk.len();
    let real = gather_rows(data, chunk);

    // Discriminator step.
    let z = set.prior.sample_batch(batch, latent_rng);
    let (fake, _) = set.generator.generate_batch(&z)?;
    let (real_logits, real_trace) = set.discriminator.logits(&real)?;
    let (fake_logits, fake_trace) = set.discriminator.logits(&fake)?;
    let d_loss = d_loss_from_logits(real_logits.as_slice(), fake_logits.as_slice())?;
    let (gr, gf) = d_loss_grads(real_logits.as_slice(), fake_logits.as_slice());
    let dspec = set.discriminator.spec().clone();
    let (_, mut d_grads) = net::backward(
        &dspec,
        set.discriminator.params(),
        &real_trace,
        &Tensor::new(vec![batch, 1], gr)?,
    )?;
    let (_, d_grads_fake) = net::backward(
        &dspec,
        set.discriminator.params(),
        &fake_trace,
        &Tensor::new(vec![batch, 1], gf)?,
    )?;
    d_grads.add_scaled(&d_grads_fake, 1.0)?;
    adam_step(set.discriminator.params_mut(), &d_grads, d_state, adam)?;

    // Generator (+Q) step, against the just-updated discriminator.
    let z2 = set.prior.sample_batch(batch, latent_rng);
    let (fake2, g_trace) = set.generator.generate_batch(&z2)?;
    let (fake2_logits, d_trace) = set.discriminator.logits(&fake2)?;
    let g_loss = g_loss_from_logits(fake2_logits.as_slice(), cfg.loss_variant)?;
    let g_grad = g_loss_grads(fake2_logits.as_slice(), cfg.loss_variant);

    let mut mi = 0.0;
    let mut taps: Vec<(usize, Tensor)> = Vec::new();
    if use_q {
        let q = set.qnet.as_mut().expect("use_q implies qnet");
        let state = q_state.as_mut().expect("use_q implies q_state");
        let features = d_trace.layer_output(set.discriminator.feature_layer()).clone();
        let (q_out, q_trace) = q.reconstruct(&features)?;
        mi = infogan_loss(&q_out, &z2, cfg.lambda_mi)?;
        let q_out_grad = infogan_grad(&q_out, &z2, cfg.lambda_mi)?;
        let qspec = q.spec().clone();
        let (feature_grad, q_grads) =
            net::backward(&qspec, q.params(), &q_trace, &q_out_grad)?;
        adam_step(q.params_mut(), &q_grads, state, adam)?;
        taps.push((set.discriminator.feature_layer(), feature_grad));
    }

    let (x_grad, _) = net::backward_with_taps(
        &dspec,
        set.discriminator.params(),
        &d_trace,
        &Tensor::new(vec![batch, 1], g_grad)?,
        &taps,
    )?;
    let gspec = set.generator.spec().clone();
    let (_, g_grads) = net::backward(&gspec, set.generator.params(), &g_trace, &x_grad)?;
    adam_step(set.generator.params_mut(), &g_grads, g_state, adam)?;

    Ok((d_loss, g_loss, mi))
}

/// Copy the selected rows of a `[count, dim]` tensor into a batch tensor.
pub(crate) fn gather_rows(data: &Tensor, idx: &[usize]) -> Tensor {
    let d = data.feature_dim();
    let mut values = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        values.extend_from_slice(data.row(i));
    }
    Tensor::new(vec![idx.len(), d], values).expect("row gather preserves shape")
}
