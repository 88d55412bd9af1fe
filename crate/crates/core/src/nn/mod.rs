//! Numerical kernel: matrices, losses, optimizers and gradient checking.

mod gradcheck;
mod loss;
mod matrix;
mod optim;
mod params;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, Violation};
pub use loss::{argmax_rows, softmax, softmax_ce};
pub use matrix::{Csr, DenseMatrix};
pub use optim::{sgd_step, OptimizerState};
pub use params::{glorot_uniform, Param, ParamSet};
