//! Per-point Jacobians of the network map.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{forward, NetworkSpec, ParameterSet};

/// Exact Jacobian `dG/dz` at a single point, by forward-mode propagation.
///
/// Starting from the identity, each layer maps the running Jacobian `J` to
/// `diag(act'(pre)) * W * J`. A point sitting exactly on a ReLU kink is
/// permitted and uses the right-derivative convention; callers probing near
/// kinks should expect finite differences to disagree there.
pub fn jacobian_analytic<F: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<F>,
    z: &[F],
) -> Result<Mat<F>> {
    params.congruent_with(spec)?;
    let n = spec.input_dim();
    if z.len() != n {
        return Err(Error::shape(format!(
            "jacobian point has dim {}, network input dim is {n}",
            z.len()
        )));
    }

    let mut jac = Mat::identity(n);
    let mut x: Vec<F> = z.to_vec();
    for (k, layer) in spec.layers().iter().enumerate() {
        let lp = &params.layers[k];
        let (in_dim, out_dim) = (lp.in_dim, lp.out_dim);

        // pre = W x + b, and the propagated rows W * J, in one sweep.
        let mut pre = vec![F::zero(); out_dim];
        let mut next = Mat::zeros(out_dim, n);
        for o in 0..out_dim {
            let wrow = &lp.weights[o * in_dim..(o + 1) * in_dim];
            let mut acc = lp.bias[o];
            for i in 0..in_dim {
                acc += wrow[i] * x[i];
            }
            pre[o] = acc;
            let dst = next.row_mut(o);
            for i in 0..in_dim {
                let w = wrow[i];
                if w == F::zero() {
                    continue;
                }
                let src = jac.row(i);
                for c in 0..n {
                    dst[c] += w * src[c];
                }
            }
            let d = layer.activation.grad_from_pre(acc);
            let dst = next.row_mut(o);
            for v in dst.iter_mut() {
                *v *= d;
            }
        }

        x = pre
            .iter()
            .map(|&p| layer.activation.apply(p))
            .collect();
        jac = next;
    }
    Ok(jac)
}

/// Central-difference Jacobian, one forward pair per input coordinate.
/// Intended as an independent check on [`jacobian_analytic`], not for
/// production use. `h` must be finite and strictly positive.
pub fn jacobian_finite_diff<F: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<F>,
    z: &[F],
    h: F,
) -> Result<Mat<F>> {
    if !(h.is_finite() && h > F::zero()) {
        return Err(Error::config(format!(
            "finite-difference step must be finite and > 0, got {h}"
        )));
    }
    params.congruent_with(spec)?;
    let n = spec.input_dim();
    if z.len() != n {
        return Err(Error::shape(format!(
            "jacobian point has dim {}, network input dim is {n}",
            z.len()
        )));
    }
    let m = spec.output_dim();
    let two_h = h + h;
    let mut jac = Mat::zeros(m, n);
    for i in 0..n {
        let mut zp = z.to_vec();
        zp[i] += h;
        let mut zm = z.to_vec();
        zm[i] -= h;
        let (yp, _) = forward(spec, params, &Tensor::vector(zp))?;
        let (ym, _) = forward(spec, params, &Tensor::vector(zm))?;
        for o in 0..m {
            let d = (yp.as_slice()[o] - ym.as_slice()[o]) / two_h;
            jac.set(o, i, d);
        }
    }
    Ok(jac)
}
