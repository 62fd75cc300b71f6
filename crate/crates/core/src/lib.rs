//! KL-regularized reinforcement learning with learned, information-restricted
//! default policies.
//!
//! The agent policy `π(a|x)` sees the full history features `x`; the default
//! policy `π0(a|x_D)` sees only a masked subset `x_D`. The agent maximizes
//! reward minus `α·KL[π ‖ π0]` per step while `π0` is distilled from `π`.
//! Alongside the learner the crate carries exact tabular oracles for the
//! optimal default policy, regularized values and information bounds.

pub mod algorithms;
pub mod analysis;
pub mod distributions;
pub mod envs;
pub mod error;
pub mod numerics;
pub mod observation;
pub mod runtime;

pub use error::{Error, Result};
