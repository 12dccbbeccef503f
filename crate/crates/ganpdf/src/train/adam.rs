//! Adam with bias correction, generic over the scalar type.

use crate::error::{Error, Result};
use crate::net::{GradientSet, NetworkSpec, ParameterSet};
use crate::scalar::Scalar;

/// Adam hyperparameters. Range validation happens at the pipeline level
/// ([`super::TrainingConfig`]); this struct is the already-checked kernel
/// view of them.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams<F> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
}

impl<F: Scalar> AdamParams<F> {
    pub fn new(learning_rate: F, beta1: F, beta2: F, epsilon: F) -> Self {
        AdamParams {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// First/second-moment accumulators plus the step counter. Shapes are
/// congruent with the parameter set they were created for.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: ParameterSet<F>,
    v: ParameterSet<F>,
    t: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(spec: &NetworkSpec) -> Self {
        AdamState {
            m: ParameterSet::zeros_like(spec),
            v: ParameterSet::zeros_like(spec),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update, in place. Rejects non-finite gradients without
/// touching parameters or optimizer state.
pub fn adam_step<F: Scalar>(
    params: &mut ParameterSet<F>,
    grads: &GradientSet<F>,
    state: &mut AdamState<F>,
    cfg: &AdamParams<F>,
) -> Result<()> {
    if params.layers.len() != grads.layers.len()
        || params.layers.len() != state.m.layers.len()
    {
        return Err(Error::shape("adam_step: layer count mismatch"));
    }
    for (p, g) in params.layers.iter().zip(grads.layers.iter()) {
        if p.weights.len() != g.weights.len() || p.bias.len() != g.bias.len() {
            return Err(Error::shape("adam_step: layer size mismatch"));
        }
    }
    if !grads.all_finite() {
        return Err(Error::numerical(
            "adam_step rejected: gradients contain non-finite values",
        ));
    }

    state.t += 1;
    let t = state.t;
    let one = F::one();
    let bias1 = one - cfg.beta1.powi(t as i32);
    let bias2 = one - cfg.beta2.powi(t as i32);

    for k in 0..params.layers.len() {
        let pl = &mut params.layers[k];
        let gl = &grads.layers[k];
        let ml = &mut state.m.layers[k];
        let vl = &mut state.v.layers[k];
        let update = |p: &mut F, g: F, m: &mut F, v: &mut F| {
            *m = cfg.beta1 * *m + (one - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (one - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        };
        for i in 0..pl.weights.len() {
            update(
                &mut pl.weights[i],
                gl.weights[i],
                &mut ml.weights[i],
                &mut vl.weights[i],
            );
        }
        for i in 0..pl.bias.len() {
            update(&mut pl.bias[i], gl.bias[i], &mut ml.bias[i], &mut vl.bias[i]);
        }
    }
    Ok(())
}
