//! Dense kernels, elementary functions, trainable tensors, Adam and
//! finite-difference gradient checking. Everything is `f64`.

mod adam;
mod dense;
mod functions;
pub mod gradcheck;
mod param;

pub use adam::{AdamConfig, AdamState};
pub use dense::{dot, norm, DenseMatrix};
pub use functions::{log_sum_exp, sigmoid, sigmoid_grad, softmax_into, softmax_rows};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use param::ParamTensor;
