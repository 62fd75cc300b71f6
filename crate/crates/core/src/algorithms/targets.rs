//! Critic targets. All of them are constants for the losses that consume them.
//!
//! Values follow `Q(s,a) = r(s,a) + γ·E[V(s')]` and
//! `V(s) = E_π[Q(s,·)] − c(s)`, where `c(s)` is the regularizer cost of the
//! state (for `kl_reg`: `α·KL[π(·|s) ‖ π0(·|x_D)]`). A step's own cost is
//! therefore part of `V` but not of `Q` at that step.

use super::{CriticKind, LossContext, Which, Window};
use crate::distributions::PolicyDistribution;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// `KL[π(·|x) ‖ π0(·|x_D)]`.
pub fn kl_per_step(policy: &PolicyDistribution, default: &PolicyDistribution) -> Result<f64> {
    policy.kl(default)
}

/// Cost entering the return: online policy against the target reference.
pub(crate) fn target_cost(ctx: &LossContext<'_>, features: &[f64], default_features: &[f64]) -> Result<f64> {
    if !ctx.regularizer.in_targets() {
        return Ok(0.0);
    }
    let pi = ctx.nets.policy_dist(features, Which::Online)?;
    let reference = ctx.reference(features, default_features, Which::Target)?;
    Ok(ctx.regularizer.penalty(ctx.hp, &pi, reference.as_ref())?.value)
}

/// `E_{π_T}[Q_T(x, ·)]`: exact for categorical policies, `M` reparameterized samples for Gaussians.
pub(crate) fn expected_target_q(ctx: &LossContext<'_>, features: &[f64], rng: &mut Rng) -> Result<f64> {
    let nets = ctx.nets;
    let pi = nets.policy_dist(features, Which::Target)?;
    match (nets.critic_kind, &pi) {
        (CriticKind::ActionValues, PolicyDistribution::Categorical(p)) => {
            p.expectation(&nets.critic_target.predict(features)?)
        }
        (CriticKind::ActionInput, PolicyDistribution::Gaussian(g)) => {
            let m = ctx.hp.mc_samples;
            let mut total = 0.0;
            for _ in 0..m {
                let (a, _) = g.rsample(rng);
                total += nets.critic_target.predict(&nets.critic_input(features, &a))?[0];
            }
            Ok(total / m as f64)
        }
        _ => Err(Error::Contract(format!(
            "no action-value expectation for a {:?} critic",
            nets.critic_kind
        ))),
    }
}

/// `V̂(x) = E_{π_T}[Q_T(x,·)] − c(x)`.
pub fn bootstrap_value(ctx: &LossContext<'_>, features: &[f64], default_features: &[f64], rng: &mut Rng) -> Result<f64> {
    Ok(expected_target_q(ctx, features, rng)? - target_cost(ctx, features, default_features)?)
}

fn end_value(ctx: &LossContext<'_>, window: &Window, rng: &mut Rng) -> Result<f64> {
    if window.bootstraps() {
        bootstrap_value(ctx, &window.next_features, &window.next_default_features, rng)
    } else {
        Ok(0.0)
    }
}

/// K-step targets `Q̂_j = r_j + Σ_{i>j} γ^{i−j}(r_i − c_i) + γ^{n−j}·V̂(x_n)`.
pub fn kstep_targets(ctx: &LossContext<'_>, window: &Window, rng: &mut Rng) -> Result<Vec<f64>> {
    let gamma = ctx.hp.gamma;
    let n = window.len();
    let mut out = vec![0.0; n];
    let mut next_value = end_value(ctx, window, rng)?;
    for j in (0..n).rev() {
        let s = &window.steps[j];
        out[j] = s.reward + gamma * next_value;
        if j > 0 {
            next_value = out[j] - target_cost(ctx, &s.features, &s.default_features)?;
        }
    }
    Ok(out)
}

fn ratio(log_pi: f64, behavior_log_prob: f64) -> Result<f64> {
    if !behavior_log_prob.is_finite() {
        return Err(Error::Contract("recorded behavior log-probability is not finite".into()));
    }
    Ok((log_pi - behavior_log_prob).exp())
}

/// Retrace targets with traces `c_i = λ·min(1, π_T(a_i|x_i)/μ(a_i|x_i))`.
pub fn retrace_targets(ctx: &LossContext<'_>, window: &Window, rng: &mut Rng) -> Result<Vec<f64>> {
    let nets = ctx.nets;
    let gamma = ctx.hp.gamma;
    let n = window.len();
    let steps = &window.steps;
    let q: Vec<f64> = steps
        .iter()
        .map(|s| nets.q_value(&s.features, &s.action, Which::Target))
        .collect::<Result<_>>()?;
    // V̂ of the state following each step.
    let mut v_next = vec![0.0; n];
    for j in 0..n - 1 {
        let s = &steps[j + 1];
        v_next[j] = bootstrap_value(ctx, &s.features, &s.default_features, rng)?;
    }
    v_next[n - 1] = end_value(ctx, window, rng)?;

    let mut out = vec![0.0; n];
    for j in (0..n).rev() {
        let delta = steps[j].reward + gamma * v_next[j] - q[j];
        out[j] = q[j] + delta;
        if j + 1 < n {
            let s = &steps[j + 1];
            let log_pi = nets.policy_dist(&s.features, Which::Target)?.log_prob(&s.action)?;
            let c = ctx.hp.retrace_lambda * ratio(log_pi, s.behavior_log_prob)?.min(1.0);
            out[j] += gamma * c * (out[j + 1] - q[j + 1]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VTraceTargets {
    /// `v_s` for every step.
    pub values: Vec<f64>,
    /// `ρ_s(r_s − c_s + γ·v_{s+1} − V(x_s))`.
    pub advantages: Vec<f64>,
}

/// V-trace on regularized rewards `r − c`, with the online value net and online policy.
pub fn vtrace_targets(ctx: &LossContext<'_>, window: &Window) -> Result<VTraceTargets> {
    let nets = ctx.nets;
    let hp = ctx.hp;
    let n = window.len();
    let steps = &window.steps;
    let mut v = Vec::with_capacity(n + 1);
    for s in steps {
        v.push(nets.critic.predict(&s.features)?[0]);
    }
    v.push(if window.bootstraps() {
        nets.critic.predict(&window.next_features)?[0]
    } else {
        0.0
    });
    let mut rewards = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    for s in steps {
        rewards.push(s.reward - target_cost(ctx, &s.features, &s.default_features)?);
        let log_pi = nets.policy_dist(&s.features, Which::Online)?.log_prob(&s.action)?;
        let r = ratio(log_pi, s.behavior_log_prob)?;
        rho.push(r.min(hp.rho_bar));
        cs.push(r.min(hp.c_bar));
    }
    let mut values = vec![0.0; n + 1];
    values[n] = v[n];
    for j in (0..n).rev() {
        let delta = rho[j] * (rewards[j] + hp.gamma * v[j + 1] - v[j]);
        values[j] = v[j] + delta + hp.gamma * cs[j] * (values[j + 1] - v[j + 1]);
    }
    let advantages = (0..n)
        .map(|j| rho[j] * (rewards[j] + hp.gamma * values[j + 1] - v[j]))
        .collect();
    values.truncate(n);
    Ok(VTraceTargets { values, advantages })
}
