use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::OptimizerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Weight of the per-step KL (or entropy) regularizer.
    pub alpha: f64,
    pub gamma: f64,
    /// Unroll length `K` of replayed windows.
    pub unroll: usize,
    /// Windows per learner step.
    pub batch_size: usize,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub lr_default: f64,
    pub optimizer: OptimizerKind,
    /// `P_a`: learner steps between copies of the policy and critic into their targets.
    pub target_period: usize,
    /// `P_d`: learner steps between copies of the default policy into its target.
    pub default_target_period: usize,
    /// `λ_H` for the entropy-bonus regularizer.
    pub entropy_bonus: f64,
    /// Monte-Carlo samples for expectations under a Gaussian policy.
    pub mc_samples: usize,
    pub retrace_lambda: f64,
    /// V-trace clipping thresholds `ρ̄` and `c̄`.
    pub rho_bar: f64,
    pub c_bar: f64,
    /// Refresh period of the frozen policy copy used by `kl_to_old_policy`.
    pub old_policy_period: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            gamma: 0.99,
            unroll: 10,
            batch_size: 64,
            lr_policy: 5e-4,
            lr_critic: 5e-4,
            lr_default: 5e-4,
            optimizer: OptimizerKind::Adam,
            target_period: 100,
            default_target_period: 100,
            entropy_bonus: 1e-4,
            mc_samples: 10,
            retrace_lambda: 1.0,
            rho_bar: 1.0,
            c_bar: 1.0,
            old_policy_period: 100,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("hp.{field}"), msg));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad("alpha", "must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if self.unroll == 0 {
            return bad("unroll", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        for (name, lr) in [
            ("lr_policy", self.lr_policy),
            ("lr_critic", self.lr_critic),
            ("lr_default", self.lr_default),
        ] {
            if !(lr > 0.0) || !lr.is_finite() {
                return bad(name, "learning rates must be positive");
            }
        }
        if self.target_period == 0 || self.default_target_period == 0 || self.old_policy_period == 0 {
            return bad("target_period", "update periods must be at least 1");
        }
        if !(self.entropy_bonus >= 0.0) {
            return bad("entropy_bonus", "must be non-negative");
        }
        if self.mc_samples == 0 {
            return bad("mc_samples", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.retrace_lambda) {
            return bad("retrace_lambda", "must lie in [0, 1]");
        }
        if !(self.rho_bar > 0.0) || !(self.c_bar > 0.0) {
            return bad("rho_bar", "clipping thresholds must be positive");
        }
        Ok(())
    }
}
