//! Black-box variational inference over Gaussian location-scale families.
//!
//! The crate provides the pieces needed to study the convergence behavior of
//! reparameterization-gradient variational inference on strongly log-concave
//! targets, where the exact posterior (and hence the exact KL divergence) is
//! available:
//!
//! - [`family`]: the location-scale family with mean-field and full-rank
//!   (Cholesky) scale parameterizations, diagonal conditioners (identity,
//!   softplus, exp), entropy and closed-form KL/ELBO for Gaussian targets;
//! - [`targets`]: quadratic and logistic negative log joints with exact
//!   gradients;
//! - [`estimators`]: Monte-Carlo gradient estimators (closed-form-entropy
//!   and sticking-the-landing), assumption statistics, and a
//!   finite-difference oracle;
//! - [`optimizers`]: vanilla SGD, proximal SGD with the closed-form entropy
//!   prox, a proximal Adam variant, stepsize schedules, and the run loop;
//! - [`theory`]: a numerical verification suite for the identities,
//!   constants and counter-examples the algorithms rely on;
//! - [`harness`]: experiment configuration, stepsize sweeps, CSV emission
//!   and the command-line interface.
//!
//! Start with the runnable examples (`cargo run --release --example ...`);
//! each one exercises a single capability end to end.

pub mod error;
pub mod estimators;
pub mod family;
pub mod harness;
pub mod linalg;
pub mod optimizers;
pub mod rng;
pub mod targets;
pub mod theory;

pub use error::{Error, Result};
