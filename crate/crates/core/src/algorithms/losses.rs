//! Window losses. Each adds `scale · weight · Σ_steps ℓ` to the returned value
//! and the same multiple of its gradient into `grad`, which has the layout of
//! the one network the loss trains.

use super::{AgentNets, CriticKind, HyperParams, Reference, Regularizer, Which, Window};
use crate::distributions::PolicyDistribution;
use crate::error::{check_len, Error, Result};
use crate::numerics::Rng;

/// Everything a loss reads: networks, hyperparameters and the active regularizer.
#[derive(Clone, Copy)]
pub struct LossContext<'a> {
    pub nets: &'a AgentNets,
    pub hp: &'a HyperParams,
    pub regularizer: &'a dyn Regularizer,
}

impl<'a> LossContext<'a> {
    pub fn new(nets: &'a AgentNets, hp: &'a HyperParams, regularizer: &'a dyn Regularizer) -> Self {
        Self { nets, hp, regularizer }
    }

    /// Reference distribution of the regularizer at a state, if it has one.
    pub fn reference(&self, features: &[f64], default_features: &[f64], which: Which) -> Result<Option<PolicyDistribution>> {
        match self.regularizer.reference() {
            Reference::None => Ok(None),
            Reference::Learned => self.nets.default_dist(default_features, which).map(Some),
            Reference::PolicySnapshot { .. } => self.nets.default_dist(features, which).map(Some),
        }
    }
}

/// Actor loss for Q critics: `Σ_j −E_{π}[Q_T(x_j,·)] + penalty_j`, gradient to `θ`.
///
/// Categorical policies use the exact expectation. Gaussian policies draw
/// `M` reparameterized actions and backpropagate through the critic's action input.
pub fn actor_loss_q(ctx: &LossContext<'_>, window: &Window, rng: &mut Rng, scale: f64, grad: &mut [f64]) -> Result<f64> {
    let nets = ctx.nets;
    let w = scale * window.weight;
    let mut total = 0.0;
    for s in &window.steps {
        let (raw, mut tape) = nets.policy.forward(&s.features)?;
        let pi = nets.head.distribution(&raw)?;
        let reference = ctx.reference(&s.features, &s.default_features, Which::Target)?;
        let pen = ctx.regularizer.penalty(ctx.hp, &pi, reference.as_ref())?;
        let mut loss = pen.value;
        let mut dist_grad = pen.grad;
        match (nets.critic_kind, &pi) {
            (CriticKind::ActionValues, PolicyDistribution::Categorical(p)) => {
                let q = nets.critic_target.predict(&s.features)?;
                loss -= p.expectation(&q)?;
                for (g, e) in dist_grad.iter_mut().zip(p.expectation_grad(&q)?) {
                    *g -= e;
                }
            }
            (CriticKind::ActionInput, PolicyDistribution::Gaussian(gauss)) => {
                let m = ctx.hp.mc_samples as f64;
                let x_len = s.features.len();
                for _ in 0..ctx.hp.mc_samples {
                    let (a, eps) = gauss.rsample(rng);
                    let (q, mut q_tape) = nets.critic_target.forward(&nets.critic_input(&s.features, &a))?;
                    loss -= q[0] / m;
                    let dq = nets.critic_target.input_gradient(&mut q_tape, &[1.0])?;
                    for (g, e) in dist_grad.iter_mut().zip(gauss.rsample_grad(&dq[x_len..], &eps)) {
                        *g -= e / m;
                    }
                }
            }
            _ => {
                return Err(Error::Contract(format!(
                    "a {:?} critic cannot drive a Q-based actor loss",
                    nets.critic_kind
                )))
            }
        }
        total += w * loss;
        nets.policy
            .backward_accumulate(&mut tape, &nets.head.backward(&raw, &dist_grad), grad, w)?;
    }
    Ok(total)
}

/// Policy-gradient actor loss: `Σ_j −A_j·log π(a_j|x_j) + penalty_j`, gradient to `θ`.
pub fn actor_loss_pg(
    ctx: &LossContext<'_>,
    window: &Window,
    advantages: &[f64],
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    check_len("advantages", advantages.len(), window.len())?;
    let nets = ctx.nets;
    let w = scale * window.weight;
    let mut total = 0.0;
    for (s, &adv) in window.steps.iter().zip(advantages) {
        let (raw, mut tape) = nets.policy.forward(&s.features)?;
        let pi = nets.head.distribution(&raw)?;
        let reference = ctx.reference(&s.features, &s.default_features, Which::Target)?;
        let pen = ctx.regularizer.penalty(ctx.hp, &pi, reference.as_ref())?;
        let mut dist_grad = pen.grad;
        for (g, l) in dist_grad.iter_mut().zip(pi.log_prob_grad(&s.action)?) {
            *g -= adv * l;
        }
        total += w * (pen.value - adv * pi.log_prob(&s.action)?);
        nets.policy
            .backward_accumulate(&mut tape, &nets.head.backward(&raw, &dist_grad), grad, w)?;
    }
    Ok(total)
}

/// `Σ_j (Q̂_j − Q(x_j, a_j))²` on the online critic (`V(x_j)` for a state-value critic).
pub fn q_loss(nets: &AgentNets, window: &Window, targets: &[f64], scale: f64, grad: &mut [f64]) -> Result<f64> {
    check_len("critic targets", targets.len(), window.len())?;
    let w = scale * window.weight;
    let mut total = 0.0;
    for (s, &target) in window.steps.iter().zip(targets) {
        let encoded = match nets.critic_kind {
            CriticKind::ActionInput => s.action.encode(nets.action_space()),
            _ => Vec::new(),
        };
        let (out, mut tape) = nets.critic.forward(&nets.critic_input(&s.features, &encoded))?;
        let idx = match nets.critic_kind {
            CriticKind::ActionValues => s
                .action
                .index()
                .filter(|&a| a < out.len())
                .ok_or_else(|| Error::invalid("discrete action outside the critic outputs"))?,
            _ => 0,
        };
        let err = out[idx] - target;
        total += w * err * err;
        let mut out_grad = vec![0.0; out.len()];
        out_grad[idx] = 2.0 * err;
        nets.critic.backward_accumulate(&mut tape, &out_grad, grad, w)?;
    }
    Ok(total)
}

/// Distillation of the (constant) online policy into the default policy,
/// gradient to `φ`. Zero for regularizers that train no default policy.
pub fn default_policy_loss(ctx: &LossContext<'_>, window: &Window, scale: f64, grad: &mut [f64]) -> Result<f64> {
    let nets = ctx.nets;
    let w = scale * window.weight;
    let mut total = 0.0;
    for s in &window.steps {
        let input = match ctx.regularizer.reference() {
            Reference::PolicySnapshot { .. } => &s.features,
            _ => &s.default_features,
        };
        let pi = nets.policy_dist(&s.features, Which::Online)?;
        let (raw, mut tape) = nets.default.forward(input)?;
        let pi0 = nets.head.distribution(&raw)?;
        let Some(d) = ctx.regularizer.distillation(&pi, &pi0)? else {
            return Ok(0.0);
        };
        total += w * d.value;
        nets.default
            .backward_accumulate(&mut tape, &nets.head.backward(&raw, &d.grad), grad, w)?;
    }
    Ok(total)
}
