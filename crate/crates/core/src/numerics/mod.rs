//! Dense arithmetic, deterministic samplers and layers with hand-written
//! backward passes. Everything is `f64`.

mod layers;
mod rng;
mod sampler;
mod tensor;

pub use layers::{
    affine_backward, affine_forward, gelu, gelu_backward, gelu_forward, gelu_grad, log_sum_exp,
    normal_cdf, normal_pdf, sigmoid, softplus, AffineGrads,
};
pub use rng::RngState;
pub use sampler::{sample_standard, PriorFamily};
pub use tensor::Tensor;
