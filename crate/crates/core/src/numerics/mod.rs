//! A small f64 tensor engine with reverse-mode differentiation.
//!
//! Values live in [`Tensor`]s; computations are recorded on a [`Tape`] as
//! [`Var`]s and differentiated with [`Tape::backward`]. Layout is row-major
//! and the only broadcast is the trailing-axis add used for biases.

mod gradcheck;
mod kernels;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport, DEFAULT_EPS};
pub use params::ParameterSet;
pub use tape::{BatchStats, Gradients, Tape, Var, BN_EPS, LOG_FLOOR};
pub use tensor::Tensor;
