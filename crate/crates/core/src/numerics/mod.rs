//! Dense numerics: matrices, feedforward networks with exact reverse-mode
//! gradients, optimizers, the seeded RNG and parameter checkpoints.

pub mod checkpoint;
mod gradcheck;
mod matrix;
mod mlp;
mod optim;
mod rng;

pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use matrix::{dot, Matrix};
pub use mlp::{Activation, GradTape, Mlp};
pub use optim::{OptimizerKind, OptimizerState};
pub use rng::Rng;
