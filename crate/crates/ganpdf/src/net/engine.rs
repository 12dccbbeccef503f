//! Forward evaluation and reverse-mode differentiation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{GradientSet, NetworkSpec, ParameterSet};

/// Intermediate values captured by [`forward`] so that [`backward`] can
/// replay the graph: the input batch plus each layer's pre- and
/// post-activation values, all shaped `[batch, width]` internally.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    pub(crate) batch: usize,
    pub(crate) input: Tensor<F>,
    pub(crate) pre: Vec<Tensor<F>>,
    pub(crate) post: Vec<Tensor<F>>,
    /// True when the caller passed a rank-1 input; output and input
    /// gradients then come back rank-1 as well.
    pub(crate) squeezed: bool,
}

impl<F: Scalar> ForwardTrace<F> {
    /// Post-activation values of layer `k`, shaped `[batch, width]`.
    pub fn layer_output(&self, k: usize) -> &Tensor<F> {
        &self.post[k]
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Normalize a rank-1 or rank-2 input to `[batch, dim]`.
fn as_batch<F: Scalar>(input: &Tensor<F>, want_dim: usize) -> Result<(Tensor<F>, bool)> {
    match input.rank() {
        1 => {
            let v = input.as_slice().to_vec();
            Ok((Tensor::new(vec![1, input.len()], v)?, true))
        }
        2 => Ok((input.clone(), false)),
        r => Err(Error::shape(format!(
            "network input must be rank 1 or 2, got rank {r}"
        ))),
    }
    .and_then(|(t, squeezed)| {
        if t.feature_dim() != want_dim {
            Err(Error::shape(format!(
                "network input has feature dim {}, spec wants {}",
                t.feature_dim(),
                want_dim
            )))
        } else {
            Ok((t, squeezed))
        }
    })
}

/// Run the network on a rank-1 vector or a rank-2 `[batch, dim]` tensor.
///
/// Returns the output (shaped like the input: rank 1 in, rank 1 out) and a
/// trace for [`backward`].
pub fn forward<F: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<F>,
    input: &Tensor<F>,
) -> Result<(Tensor<F>, ForwardTrace<F>)> {
    params.congruent_with(spec)?;
    let (x, squeezed) = as_batch(input, spec.input_dim())?;
    let batch = x.shape()[0];

    let mut pre = Vec::with_capacity(spec.num_layers());
    let mut post = Vec::with_capacity(spec.num_layers());
    let mut cur = x.clone();

    for (k, layer) in spec.layers().iter().enumerate() {
        let lp = &params.layers[k];
        let (in_dim, out_dim) = (lp.in_dim, lp.out_dim);
        let mut p = Tensor::zeros(vec![batch, out_dim]);
        for b in 0..batch {
            let row = cur.row(b);
            let out = p.row_mut(b);
            for o in 0..out_dim {
                let wrow = &lp.weights[o * in_dim..(o + 1) * in_dim];
                let mut acc = lp.bias[o];
                for i in 0..in_dim {
                    acc += wrow[i] * row[i];
                }
                out[o] = acc;
            }
        }
        let mut a = p.clone();
        for v in a.as_mut_slice() {
            *v = layer.activation.apply(*v);
        }
        pre.push(p);
        post.push(a.clone());
        cur = a;
    }

    let output = if squeezed {
        Tensor::vector(cur.as_slice().to_vec())
    } else {
        cur
    };
    let trace = ForwardTrace {
        batch,
        input: x,
        pre,
        post,
        squeezed,
    };
    Ok((output, trace))
}

/// Reverse-mode pass: gradients of a scalar objective with respect to all
/// parameters and to the network input, given the objective's gradient with
/// respect to the network output.
pub fn backward<F: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<F>,
    trace: &ForwardTrace<F>,
    output_grad: &Tensor<F>,
) -> Result<(Tensor<F>, GradientSet<F>)> {
    backward_with_taps(spec, params, trace, output_grad, &[])
}

/// [`backward`] with extra gradient injected at interior layers.
///
/// Each tap `(k, g)` adds `g` (shaped `[batch, width_k]`, or rank 1 for a
/// rank-1 trace) to the gradient flowing into layer `k`'s post-activation.
/// This lets a second head that reads an interior feature layer
/// contribute its gradient to the shared trunk without the trunk knowing
/// about the head.
pub fn backward_with_taps<F: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<F>,
    trace: &ForwardTrace<F>,
    output_grad: &Tensor<F>,
    taps: &[(usize, Tensor<F>)],
) -> Result<(Tensor<F>, GradientSet<F>)> {
    params.congruent_with(spec)?;
    if trace.pre.len() != spec.num_layers() {
        return Err(Error::shape(
            "forward trace does not match network spec",
        ));
    }
    let batch = trace.batch;
    let last = spec.num_layers() - 1;

    let (og, _) = as_batch(output_grad, spec.output_dim())?;
    if og.shape()[0] != batch {
        return Err(Error::shape(format!(
            "output_grad batch {} does not match trace batch {batch}",
            og.shape()[0]
        )));
    }

    // Materialize taps indexed by layer.
    let mut tap_by_layer: Vec<Option<Tensor<F>>> = vec![None; spec.num_layers()];
    for (k, g) in taps {
        if *k > last {
            return Err(Error::shape(format!(
                "tap at layer {k} but network has {} layers",
                spec.num_layers()
            )));
        }
        let (gb, _) = as_batch(g, spec.layers()[*k].out_dim)?;
        if gb.shape()[0] != batch {
            return Err(Error::shape(format!(
                "tap at layer {k} has batch {} but trace has {batch}",
                gb.shape()[0]
            )));
        }
        match &mut tap_by_layer[*k] {
            slot @ None => *slot = Some(gb),
            Some(existing) => {
                for (a, b) in existing.as_mut_slice().iter_mut().zip(gb.as_slice()) {
                    *a += *b;
                }
            }
        }
    }

    let mut grads = GradientSet::zeros_like(spec);
    // Gradient w.r.t. the post-activation of the layer being processed.
    let mut g_post = og;

    for k in (0..spec.num_layers()).rev() {
        if let Some(tap) = &tap_by_layer[k] {
            for (a, b) in g_post.as_mut_slice().iter_mut().zip(tap.as_slice()) {
                *a += *b;
            }
        }
        let lp = &params.layers[k];
        let (in_dim, out_dim) = (lp.in_dim, lp.out_dim);
        let act = spec.layers()[k].activation;
        let below: &Tensor<F> = if k == 0 { &trace.input } else { &trace.post[k - 1] };

        let mut g_prev = Tensor::zeros(vec![batch, in_dim]);
        let gl = &mut grads.layers[k];
        for b in 0..batch {
            let pre_row = trace.pre[k].row(b);
            let gp_row = g_post.row(b);
            let x_row = below.row(b);
            let gprev_row = g_prev.row_mut(b);
            for o in 0..out_dim {
                let gpre = gp_row[o] * act.grad_from_pre(pre_row[o]);
                if gpre == F::zero() {
                    continue;
                }
                gl.bias[o] += gpre;
                let wrow_start = o * in_dim;
                for i in 0..in_dim {
                    gl.weights[wrow_start + i] += gpre * x_row[i];
                    gprev_row[i] += lp.weights[wrow_start + i] * gpre;
                }
            }
        }
        g_post = g_prev;
    }

    let input_grad = if trace.squeezed {
        Tensor::vector(g_post.as_slice().to_vec())
    } else {
        g_post
    };
    Ok((input_grad, grads))
}
