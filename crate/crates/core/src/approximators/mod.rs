//! Differentiable function approximators.
//!
//! Networks are plain multi-layer perceptrons over a flat [`ParamVector`];
//! gradients are computed by an explicit reverse pass and checked against
//! central finite differences in tests.

pub(crate) mod gaussian;
mod gradcheck;
pub(crate) mod mlp;

pub use gaussian::{
    gaussian_log_density, gaussian_sample, squash_correction, GaussianHeadOutput, SquashedSample,
    LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS,
};
pub use gradcheck::finite_diff_check;
pub use mlp::{backward, mlp_forward, Activation, Mlp, MlpSpec, MlpTrace, ParamVector};
