//! Explicit probability densities from trained generative maps.
//!
//! A generative map `G: R^n -> R^m` (m >= n) pushes a known latent prior
//! forward onto an n-dimensional manifold in data space. The density of a
//! generated point with respect to the manifold volume measure is
//!
//! ```text
//! log p(x) = log p(z) - sum_i log |r_ii|
//! ```
//!
//! where the `r_ii` are the diagonal entries of the thin-QR factor of the
//! Jacobian of `G` at `z`. This crate provides the pieces of that pipeline:
//!
//! - [`net`]: a minimal dense-network engine with exact forward, backward,
//!   and per-point Jacobian computation,
//! - [`models`]: generator / discriminator / Q-network / regressor wrappers
//!   and the standard-normal latent prior,
//! - [`train`]: Adam, the adversarial and latent-reconstruction losses, and
//!   the training loops,
//! - [`density`]: the QR log-determinant, manifold and bijective log-density
//!   routines, and triplet sampling,
//! - [`latent`]: latent-space density labels and the latent regressor,
//! - [`data`]: dataset loaders, synthetic mixtures, and the KDE oracle,
//! - [`analysis`]: histograms, rankings, and report generation,
//! - [`verify`]: self-contained numerical invariant checks,
//! - [`cli`]: the pipeline subcommands.
//!
//! Numeric kernels ([`tensor`], [`linalg`], [`net`], [`train::adam`]) are
//! generic over the scalar type; the pipeline itself runs in `f64`, and the
//! aliases below fix the concrete instantiations used throughout.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod density;
pub mod error;
pub mod latent;
pub mod linalg;
pub mod models;
pub mod net;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};

/// 64-bit tensor used by the pipeline.
pub type Tensor = tensor::Tensor<f64>;
/// 64-bit dense matrix; Jacobians of `G` are stored in this form.
pub type Mat = linalg::Mat<f64>;
/// 64-bit parameter set of a dense network.
pub type ParameterSet = net::ParameterSet<f64>;
/// 64-bit gradient set, shape-congruent with [`ParameterSet`].
pub type GradientSet = net::GradientSet<f64>;
/// 64-bit forward trace.
pub type ForwardTrace = net::ForwardTrace<f64>;
