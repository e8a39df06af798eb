//! Dense math, activations, reverse-mode differentiation and verification
//! utilities.

pub mod bf16;
pub mod functions;
pub mod gradcheck;
pub mod linalg;
pub mod lipschitz;
pub mod tape;
mod tensor;

pub use bf16::{bf16_round, BF16_EPSILON};
pub use functions::{
    argmax, gelu_tanh, gelu_tanh_grad, log_sum_exp, rms_norm, sigmoid, silu, silu_grad,
    softmax_logprobs, RMS_EPS,
};
pub use gradcheck::{finite_difference, grad_check, relative_error};
pub use linalg::{jacobi_eigen, spectral_norm, POWER_ITERS};
pub use lipschitz::{empirical_lipschitz, gelu_max_derivative, sigma_max, GELU_LIPSCHITZ};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
