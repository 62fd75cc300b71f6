//! Losses, critic targets and the learner update.
//!
//! Three learner algorithms share one set of networks ([`AgentNets`]):
//! `kstep` (plain K-step returns), `retrace` (off-policy corrected Q targets)
//! and `vtrace` (state-value critic with importance-weighted advantages).
//! Seven regularizers decide how the default policy enters the objective.
//! Both families are looked up by name at runtime.
//!
//! Loss conventions: every loss is minimized. Batch losses are averaged over
//! the steps in the batch, each window scaled by its `weight`.

mod batch;
pub mod gradcheck;
mod hyper;
mod learner;
mod losses;
mod nets;
mod regularizer;
mod targets;

pub use batch::{Step, Window};
pub use hyper::HyperParams;
pub use learner::{
    sync_targets, Algorithm, AlgorithmRegistry, KStep, Learner, Retrace, UpdateStats, VTrace, WindowTargets,
};
pub use losses::{actor_loss_pg, actor_loss_q, default_policy_loss, q_loss, LossContext};
pub use nets::{AgentNets, Architecture, CriticKind, Which};
pub use regularizer::{
    EntropyRegularizer, KlDirection, KlRegularizer, OldPolicyRegularizer, Reference, Regularizer,
    RegularizerRegistry, Penalty,
};
pub use targets::{bootstrap_value, kl_per_step, kstep_targets, retrace_targets, vtrace_targets, VTraceTargets};
