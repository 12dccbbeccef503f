//! Self-contained verification suite: every mathematical invariant the
//! density machinery rests on, runnable end-to-end on toy generators with
//! no external inputs.
//!
//! The two numeric routes under test (analytic Jacobian, QR
//! log-determinant) are injectable so the suite itself can be validated by
//! mutation: swapping in a deliberately broken route must flip the
//! corresponding checks to failing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::{lu_log_abs_det, qr_log_abs_det};
use crate::models::LatentPrior;
use crate::net::{
    self, init_parameters, jacobian_analytic, jacobian_finite_diff, Activation, NetworkSpec,
};
use crate::{Mat, ParameterSet};

/// Result of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn pass(name: &str, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed: true,
            detail,
        }
    }

    fn fail(name: &str, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed: false,
            detail,
        }
    }

    fn from_bound(name: &str, measured: f64, bound: f64) -> Self {
        let detail = format!("measured {measured:.3e}, bound {bound:.3e}");
        if measured.is_finite() && measured < bound {
            Self::pass(name, detail)
        } else {
            Self::fail(name, detail)
        }
    }
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

/// The numeric routes exercised by the suite. Production wiring comes from
/// [`Suite::production`]; tests may inject broken routes to confirm the
/// checks can fail.
pub struct Suite<'a> {
    pub jacobian: &'a (dyn Fn(&NetworkSpec, &ParameterSet, &[f64]) -> Result<Mat> + Sync),
    pub log_det: &'a (dyn Fn(&Mat) -> Result<f64> + Sync),
}

fn production_jacobian(spec: &NetworkSpec, params: &ParameterSet, z: &[f64]) -> Result<Mat> {
    jacobian_analytic(spec, params, z)
}

fn production_log_det(j: &Mat) -> Result<f64> {
    Ok(qr_log_abs_det(j)?.0)
}

impl Suite<'static> {
    pub fn production() -> Self {
        Suite {
            jacobian: &production_jacobian,
            log_det: &production_log_det,
        }
    }
}

/// Run the full production suite.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    Suite::production().run(seed)
}

/// Smooth random generator nets used throughout the suite.
fn toy_generator(n: usize, m: usize, seed: u64) -> (NetworkSpec, ParameterSet) {
    let spec = NetworkSpec::mlp(n, &[10], Activation::Tanh, m, Activation::Identity)
        .expect("valid toy architecture");
    let mut params = init_parameters(&spec, seed);
    for l in &mut params.layers {
        for w in &mut l.weights {
            *w *= 25.0;
        }
    }
    (spec, params)
}

fn sample_z(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand_distr::StandardNormal;
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

impl Suite<'_> {
    pub fn run(&self, seed: u64) -> Vec<CheckOutcome> {
        vec![
            self.check_jacobian_fd(seed),
            self.check_backward_fd(seed),
            self.check_route_equivalence(seed),
            self.check_closed_form_anchors(),
            self.check_scaling_law(seed),
            self.check_isometry(seed),
            self.check_normalization(seed),
        ]
    }

    /// Analytic Jacobian vs central finite differences on smooth nets.
    fn check_jacobian_fd(&self, seed: u64) -> CheckOutcome {
        let name = "jacobian_vs_finite_difference";
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA1);
        let mut worst = 0.0f64;
        for i in 0..4 {
            let (spec, params) = toy_generator(2, 3, seed.wrapping_add(i));
            let z = sample_z(2, &mut rng);
            let a = match (self.jacobian)(&spec, &params, &z) {
                Ok(j) => j,
                Err(e) => return CheckOutcome::fail(name, format!("jacobian failed: {e}")),
            };
            let fd = match jacobian_finite_diff(&spec, &params, &z, 1e-5) {
                Ok(j) => j,
                Err(e) => return CheckOutcome::fail(name, format!("fd oracle failed: {e}")),
            };
            if a.rows() != fd.rows() || a.cols() != fd.cols() {
                return CheckOutcome::fail(
                    name,
                    format!(
                        "shape mismatch: {}x{} vs {}x{}",
                        a.rows(),
                        a.cols(),
                        fd.rows(),
                        fd.cols()
                    ),
                );
            }
            let mut scale = 0.0f64;
            for r in 0..a.rows() {
                for c in 0..a.cols() {
                    scale = scale.max(fd.get(r, c).abs());
                }
            }
            for r in 0..a.rows() {
                for c in 0..a.cols() {
                    let diff = (a.get(r, c) - fd.get(r, c)).abs() / scale.max(1.0);
                    worst = worst.max(diff);
                }
            }
        }
        CheckOutcome::from_bound(name, worst, 1e-5)
    }

    /// Reverse-mode gradients vs finite differences of the scalar loss
    /// `L = sum y^2` over every parameter of a small net.
    fn check_backward_fd(&self, seed: u64) -> CheckOutcome {
        let name = "backward_vs_finite_difference";
        let spec = NetworkSpec::mlp(2, &[6], Activation::Tanh, 2, Activation::Identity)
            .expect("valid architecture");
        let mut params = init_parameters(&spec, seed ^ 0xB2);
        for l in &mut params.layers {
            for w in &mut l.weights {
                *w *= 30.0;
            }
        }
        let x = crate::Tensor::new(vec![1, 2], vec![0.35, -0.8]).expect("valid input");
        let loss = |p: &ParameterSet| -> f64 {
            let (y, _) = net::forward(&spec, p, &x).expect("forward");
            y.as_slice().iter().map(|v| v * v).sum()
        };
        let (y, trace) = net::forward(&spec, &params, &x).expect("forward");
        let grad_out = crate::Tensor::new(
            vec![1, 2],
            y.as_slice().iter().map(|v| 2.0 * v).collect(),
        )
        .expect("grad tensor");
        let (_, grads) = match net::backward(&spec, &params, &trace, &grad_out) {
            Ok(g) => g,
            Err(e) => return CheckOutcome::fail(name, format!("backward failed: {e}")),
        };
        let h = 1e-6;
        let mut worst = 0.0f64;
        for li in 0..params.layers.len() {
            for wi in 0..params.layers[li].weights.len() {
                let mut plus = params.clone();
                plus.layers[li].weights[wi] += h;
                let mut minus = params.clone();
                minus.layers[li].weights[wi] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let diff = (grads.layers[li].weights[wi] - fd).abs() / fd.abs().max(1.0);
                worst = worst.max(diff);
            }
            for bi in 0..params.layers[li].bias.len() {
                let mut plus = params.clone();
                plus.layers[li].bias[bi] += h;
                let mut minus = params.clone();
                minus.layers[li].bias[bi] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let diff = (grads.layers[li].bias[bi] - fd).abs() / fd.abs().max(1.0);
                worst = worst.max(diff);
            }
        }
        CheckOutcome::from_bound(name, worst, 1e-5)
    }

    /// On square full-rank maps the metric-tensor route must agree with
    /// the classical LU change of variables.
    fn check_route_equivalence(&self, seed: u64) -> CheckOutcome {
        let name = "square_map_route_equivalence";
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC3);
        let prior = LatentPrior::new(3).expect("valid prior");
        let mut worst = 0.0f64;
        for i in 0..3 {
            let (spec, params) = toy_generator(3, 3, seed.wrapping_add(100 + i));
            for _ in 0..20 {
                let z = sample_z(3, &mut rng);
                let j = match (self.jacobian)(&spec, &params, &z) {
                    Ok(j) => j,
                    Err(e) => return CheckOutcome::fail(name, format!("jacobian failed: {e}")),
                };
                let metric = match (self.log_det)(&j) {
                    Ok(d) => d,
                    Err(e) => return CheckOutcome::fail(name, format!("log-det failed: {e}")),
                };
                let lu = match lu_log_abs_det(&j) {
                    Ok(d) => d,
                    Err(e) => return CheckOutcome::fail(name, format!("lu failed: {e}")),
                };
                let lp = prior.log_density(&z).expect("prior");
                worst = worst.max(((lp - metric) - (lp - lu)).abs());
            }
        }
        CheckOutcome::from_bound(name, worst, 1e-10)
    }

    /// Identity, duplication, and doubling maps against hand-derived
    /// log-density values.
    fn check_closed_form_anchors(&self) -> CheckOutcome {
        let name = "closed_form_anchors";
        let two_pi = 2.0 * std::f64::consts::PI;
        let cases: Vec<(Mat, usize, f64)> = vec![
            // Identity in 2D at z = 0.
            (
                Mat::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                2,
                -two_pi.ln(),
            ),
            // Duplication (z, z) from 1D at z = 0.
            (
                Mat::new(2, 1, vec![1.0, 1.0]).unwrap(),
                1,
                -0.5 * two_pi.ln() - 0.5 * std::f64::consts::LN_2,
            ),
            // Doubling 2z in 2D at z = 0.
            (
                Mat::new(2, 2, vec![2.0, 0.0, 0.0, 2.0]).unwrap(),
                2,
                -two_pi.ln() - 2.0 * std::f64::consts::LN_2,
            ),
        ];
        let mut worst = 0.0f64;
        for (j, n, expect) in cases {
            let prior = LatentPrior::new(n).expect("valid prior");
            let lp0 = prior.log_density(&vec![0.0; n]).expect("prior");
            let det = match (self.log_det)(&j) {
                Ok(d) => d,
                Err(e) => return CheckOutcome::fail(name, format!("log-det failed: {e}")),
            };
            worst = worst.max((lp0 - det - expect).abs());
        }
        CheckOutcome::from_bound(name, worst, 1e-10)
    }

    /// Scaling the output by c must shift the log-density by exactly
    /// -n log c.
    fn check_scaling_law(&self, seed: u64) -> CheckOutcome {
        let name = "output_scaling_law";
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD4);
        let (spec, params) = toy_generator(2, 4, seed.wrapping_add(200));
        let c = 2.0f64;
        let mut worst = 0.0f64;
        for _ in 0..8 {
            let z = sample_z(2, &mut rng);
            let j = match (self.jacobian)(&spec, &params, &z) {
                Ok(j) => j,
                Err(e) => return CheckOutcome::fail(name, format!("jacobian failed: {e}")),
            };
            let mut scaled = Mat::zeros(j.rows(), j.cols());
            for r in 0..j.rows() {
                for col in 0..j.cols() {
                    scaled.set(r, col, c * j.get(r, col));
                }
            }
            let base = match (self.log_det)(&j) {
                Ok(d) => d,
                Err(e) => return CheckOutcome::fail(name, format!("log-det failed: {e}")),
            };
            let shifted = match (self.log_det)(&scaled) {
                Ok(d) => d,
                Err(e) => return CheckOutcome::fail(name, format!("log-det failed: {e}")),
            };
            // Density shift is -(shifted - base); must equal -n log c.
            worst = worst.max((shifted - base - 2.0 * c.ln()).abs());
        }
        CheckOutcome::from_bound(name, worst, 1e-10)
    }

    /// Composing the output with an orthogonal map must not change the
    /// log-density (J -> QJ has the same metric tensor).
    fn check_isometry(&self, seed: u64) -> CheckOutcome {
        let name = "output_isometry_invariance";
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE5);
        let (spec, params) = toy_generator(2, 3, seed.wrapping_add(300));
        // Gram-Schmidt orthogonal 3x3.
        let q = {
            let mut rows: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            for i in 0..3 {
                for j in 0..i {
                    let dot: f64 = (0..3).map(|k| rows[i][k] * rows[j][k]).sum();
                    for k in 0..3 {
                        rows[i][k] -= dot * rows[j][k];
                    }
                }
                let norm: f64 = rows[i].iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in &mut rows[i] {
                    *v /= norm;
                }
            }
            rows
        };
        let mut worst = 0.0f64;
        for _ in 0..8 {
            let z = sample_z(2, &mut rng);
            let j = match (self.jacobian)(&spec, &params, &z) {
                Ok(j) => j,
                Err(e) => return CheckOutcome::fail(name, format!("jacobian failed: {e}")),
            };
            if j.rows() != 3 || j.cols() != 2 {
                return CheckOutcome::fail(
                    name,
                    format!("expected a 3x2 Jacobian, got {}x{}", j.rows(), j.cols()),
                );
            }
            let mut qj = Mat::zeros(3, 2);
            for r in 0..3 {
                for col in 0..2 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        s += q[r][k] * j.get(k, col);
                    }
                    qj.set(r, col, s);
                }
            }
            let base = match (self.log_det)(&j) {
                Ok(d) => d,
                Err(e) => return CheckOutcome::fail(name, format!("log-det failed: {e}")),
            };
            let rotated = match (self.log_det)(&qj) {
                Ok(d) => d,
                Err(e) => return CheckOutcome::fail(name, format!("log-det failed: {e}")),
            };
            worst = worst.max((rotated - base).abs());
        }
        CheckOutcome::from_bound(name, worst, 1e-10)
    }

    /// For a 1D-latent curve in R^2 the density integrated against arc
    /// length must be 1 (adaptive Simpson quadrature).
    fn check_normalization(&self, seed: u64) -> CheckOutcome {
        let name = "curve_density_normalization";
        let (spec, params) = toy_generator(1, 2, seed.wrapping_add(400));
        let prior = LatentPrior::new(1).expect("valid prior");
        let integrand = |t: f64| -> Result<f64> {
            let j = (self.jacobian)(&spec, &params, &[t])?;
            let det = (self.log_det)(&j)?;
            let lp = prior.log_density(&[t])? - det;
            let speed = (j.get(0, 0).powi(2) + j.get(1, 0).powi(2)).sqrt();
            Ok(lp.exp() * speed)
        };
        match adaptive_simpson(&integrand, -8.0, 8.0, 1e-5, 20) {
            Ok(total) => CheckOutcome::from_bound(name, (total - 1.0).abs(), 1e-2),
            Err(e) => CheckOutcome::fail(name, format!("quadrature failed: {e}")),
        }
    }
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> Result<f64>,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm)?;
        let frm = f(rm)?;
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            Ok(left + right + (left + right - whole) / 15.0)
        } else {
            Ok(recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
        }
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}
