//! Dense networks, Gaussian policy heads and the Adam optimizer.
//!
//! Everything here works in `f64`. Parameters of a network live in one flat
//! [`ParameterVector`]; layer views are carved out of it on demand so that
//! optimizers, Polyak averaging and finite-difference checks can treat a
//! network as a plain vector.

mod adam;
mod gaussian;
mod mlp;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gaussian::{gaussian_log_prob, reparam_sample, GaussianHead, HALF_LOG_2PI};
pub use mlp::{mlp_forward, mlp_gradient, Activation, Gradients, MlpSpec, Tape};
pub use params::ParameterVector;

pub(crate) use gaussian::log_prob_with_grads;
