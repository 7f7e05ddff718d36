//! Dense numerical primitives: the matrix type, layer building blocks with
//! hand-written backward passes, and the finite-difference gradient oracle
//! every analytic gradient in the crate is checked against.

mod gradcheck;
mod matrix;
mod ops;

pub use gradcheck::{
    compare_gradients, numerical_gradient, GradCheckReport, GradientBundle, NumericalGradient,
    ParamAccess, DEFAULT_FD_STEP,
};
pub use matrix::{argmax, argmin, dot, sq_dist, Matrix};
pub use ops::{
    affine_backward, affine_forward, batchnorm_backward, batchnorm_forward,
    batchnorm_forward_pure, dropout_apply, leaky_relu, leaky_relu_backward, BatchNormCache, Mode,
    RunningStats, BN_EPS, BN_MOMENTUM, LEAKY_SLOPE,
};
