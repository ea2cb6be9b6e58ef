//! Dense numerics shared by every model in the crate.

mod gradcheck;
mod loss;
pub(crate) mod matrix;
mod optim;
mod params;
mod rng;

pub use gradcheck::{grad_check, GradCheckReport, SlotCheck};
pub use loss::{binary_cross_entropy, sigmoid, softmax, softmax_cross_entropy, BCE_EPS};
pub use matrix::{affine, affine_backward, Matrix};
pub use optim::{sgd_step, Optimizer, OptimizerKind};
pub use params::{glorot_limit, ParamStore, SlotId};
pub use rng::{derive_seed, Rng};
