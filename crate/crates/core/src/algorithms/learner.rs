use std::collections::BTreeMap;
use std::fmt::Debug;

use super::{
    actor_loss_pg, actor_loss_q, default_policy_loss, kstep_targets, q_loss, retrace_targets, vtrace_targets,
    AgentNets, CriticKind, HyperParams, LossContext, Reference, Regularizer, Which, Window,
};
use crate::distributions::ActionSpace;
use crate::error::{Error, Result};
use crate::numerics::{OptimizerState, Rng};

/// Critic targets of one window, plus advantages for policy-gradient actors.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTargets {
    pub critic: Vec<f64>,
    pub advantages: Option<Vec<f64>>,
}

/// A learner algorithm: how critic targets are built and how the actor is updated.
pub trait Algorithm: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    fn critic_kind(&self, space: ActionSpace) -> CriticKind;

    fn targets(&self, ctx: &LossContext<'_>, window: &Window, rng: &mut Rng) -> Result<WindowTargets>;

    fn actor_loss(
        &self,
        ctx: &LossContext<'_>,
        window: &Window,
        targets: &WindowTargets,
        rng: &mut Rng,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64>;
}

fn q_critic(space: ActionSpace) -> CriticKind {
    match space {
        ActionSpace::Discrete(_) => CriticKind::ActionValues,
        ActionSpace::Continuous(_) => CriticKind::ActionInput,
    }
}

/// Uncorrected K-step returns.
#[derive(Debug, Clone, Copy, Default)]
pub struct KStep;

impl Algorithm for KStep {
    fn name(&self) -> &'static str {
        "kstep"
    }

    fn critic_kind(&self, space: ActionSpace) -> CriticKind {
        q_critic(space)
    }

    fn targets(&self, ctx: &LossContext<'_>, window: &Window, rng: &mut Rng) -> Result<WindowTargets> {
        Ok(WindowTargets {
            critic: kstep_targets(ctx, window, rng)?,
            advantages: None,
        })
    }

    fn actor_loss(
        &self,
        ctx: &LossContext<'_>,
        window: &Window,
        _: &WindowTargets,
        rng: &mut Rng,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        actor_loss_q(ctx, window, rng, scale, grad)
    }
}

/// Retrace-corrected Q targets with target networks.
#[derive(Debug, Clone, Copy, Default)]
pub struct Retrace;

impl Algorithm for Retrace {
    fn name(&self) -> &'static str {
        "retrace"
    }

    fn critic_kind(&self, space: ActionSpace) -> CriticKind {
        q_critic(space)
    }

    fn targets(&self, ctx: &LossContext<'_>, window: &Window, rng: &mut Rng) -> Result<WindowTargets> {
        Ok(WindowTargets {
            critic: retrace_targets(ctx, window, rng)?,
            advantages: None,
        })
    }

    fn actor_loss(
        &self,
        ctx: &LossContext<'_>,
        window: &Window,
        _: &WindowTargets,
        rng: &mut Rng,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        actor_loss_q(ctx, window, rng, scale, grad)
    }
}

/// State-value critic with V-trace targets and importance-weighted policy gradient.
#[derive(Debug, Clone, Copy, Default)]
pub struct VTrace;

impl Algorithm for VTrace {
    fn name(&self) -> &'static str {
        "vtrace"
    }

    fn critic_kind(&self, _: ActionSpace) -> CriticKind {
        CriticKind::StateValue
    }

    fn targets(&self, ctx: &LossContext<'_>, window: &Window, _: &mut Rng) -> Result<WindowTargets> {
        let t = vtrace_targets(ctx, window)?;
        Ok(WindowTargets {
            critic: t.values,
            advantages: Some(t.advantages),
        })
    }

    fn actor_loss(
        &self,
        ctx: &LossContext<'_>,
        window: &Window,
        targets: &WindowTargets,
        _: &mut Rng,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let adv = targets
            .advantages
            .as_deref()
            .ok_or_else(|| Error::Contract("v-trace actor loss needs advantages".into()))?;
        actor_loss_pg(ctx, window, adv, scale, grad)
    }
}

pub type AlgorithmFactory = fn() -> Box<dyn Algorithm>;

/// Learner algorithms selectable by name.
pub struct AlgorithmRegistry {
    factories: BTreeMap<&'static str, AlgorithmFactory>,
}

impl AlgorithmRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: AlgorithmFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str) -> Result<Box<dyn Algorithm>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            Error::config("algorithm", format!("unknown algorithm `{name}` (known: {})", known.join(", ")))
        })?;
        Ok(factory())
    }
}

impl Default for AlgorithmRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("kstep", || Box::new(KStep));
        r.register("retrace", || Box::new(Retrace));
        r.register("vtrace", || Box::new(VTrace));
        r
    }
}

/// Hard target copies: policy and critic every `P_a` steps, default policy
/// every `P_d` steps. A policy-snapshot reference is refreshed from the
/// online policy on its own period instead.
pub fn sync_targets(nets: &mut AgentNets, step: u64, hp: &HyperParams, reference: Reference, freeze_default: bool) {
    if step % hp.target_period as u64 == 0 {
        nets.policy_target.clone_from(&nets.policy);
        nets.critic_target.clone_from(&nets.critic);
    }
    match reference {
        Reference::PolicySnapshot { period } => {
            if step % period as u64 == 0 {
                nets.default.clone_from(&nets.policy);
                nets.default_target.clone_from(&nets.policy);
            }
        }
        Reference::Learned if !freeze_default && step % hp.default_target_period as u64 == 0 => {
            nets.default_target.clone_from(&nets.default);
        }
        _ => {}
    }
}

/// Batch averages reported after each learner step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub loss_pi: f64,
    pub loss_q: f64,
    pub loss_pi0: f64,
    /// Mean `KL[π ‖ π0]` over the batch, online nets.
    pub mean_kl: f64,
    /// Mean entropy of the online default policy over the batch.
    pub default_entropy: f64,
}

/// Owns the networks and optimizers and applies one update per batch.
#[derive(Debug)]
pub struct Learner {
    nets: AgentNets,
    hp: HyperParams,
    algorithm: Box<dyn Algorithm>,
    regularizer: Box<dyn Regularizer>,
    opt_policy: OptimizerState,
    opt_critic: OptimizerState,
    opt_default: OptimizerState,
    freeze_default: bool,
    steps: u64,
    rng: Rng,
}

impl Learner {
    pub fn new(
        mut nets: AgentNets,
        hp: HyperParams,
        algorithm: Box<dyn Algorithm>,
        regularizer: Box<dyn Regularizer>,
        freeze_default: bool,
        rng: Rng,
    ) -> Result<Self> {
        hp.validate()?;
        let expected = algorithm.critic_kind(nets.action_space());
        if nets.critic_kind != expected {
            return Err(Error::config(
                "algorithm",
                format!("`{}` needs a {expected:?} critic, nets carry {:?}", algorithm.name(), nets.critic_kind),
            ));
        }
        if let Reference::PolicySnapshot { .. } = regularizer.reference() {
            nets.default = nets.policy.clone();
            nets.default_target = nets.policy.clone();
        }
        let opt_policy = OptimizerState::new(hp.optimizer, hp.lr_policy, nets.policy.num_params())?;
        let opt_critic = OptimizerState::new(hp.optimizer, hp.lr_critic, nets.critic.num_params())?;
        let opt_default = OptimizerState::new(hp.optimizer, hp.lr_default, nets.default.num_params())?;
        Ok(Self {
            nets,
            hp,
            algorithm,
            regularizer,
            opt_policy,
            opt_critic,
            opt_default,
            freeze_default,
            steps: 0,
            rng,
        })
    }

    pub fn nets(&self) -> &AgentNets {
        &self.nets
    }

    pub fn into_nets(self) -> AgentNets {
        self.nets
    }

    pub fn hp(&self) -> &HyperParams {
        &self.hp
    }

    pub fn algorithm(&self) -> &dyn Algorithm {
        &*self.algorithm
    }

    pub fn regularizer(&self) -> &dyn Regularizer {
        &*self.regularizer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn freeze_default(&self) -> bool {
        self.freeze_default
    }

    fn trains_default(&self) -> bool {
        self.regularizer.reference() == Reference::Learned && !self.freeze_default
    }

    /// Batch statistics without updating anything.
    pub fn evaluate_stats(&self, batch: &[Window]) -> Result<UpdateStats> {
        let ctx = LossContext::new(&self.nets, &self.hp, &*self.regularizer);
        let mut stats = UpdateStats::default();
        let mut n = 0usize;
        for w in batch {
            for s in &w.steps {
                let pi = self.nets.policy_dist(&s.features, Which::Online)?;
                let pi0 = match ctx.reference(&s.features, &s.default_features, Which::Online)? {
                    Some(d) => d,
                    None => self.nets.default_dist(&s.default_features, Which::Online)?,
                };
                stats.mean_kl += pi.kl(&pi0)?;
                stats.default_entropy += pi0.entropy();
                n += 1;
            }
        }
        if n > 0 {
            stats.mean_kl /= n as f64;
            stats.default_entropy /= n as f64;
        }
        Ok(stats)
    }

    /// One learner step: targets, three losses, three optimizer steps, target sync.
    pub fn update(&mut self, batch: &[Window]) -> Result<UpdateStats> {
        let n_steps: usize = batch.iter().map(Window::len).sum();
        if n_steps == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let scale = 1.0 / n_steps as f64;
        let trains_default = self.trains_default();
        let mut g_pi = vec![0.0; self.nets.policy.num_params()];
        let mut g_q = vec![0.0; self.nets.critic.num_params()];
        let mut g_pi0 = vec![0.0; self.nets.default.num_params()];
        let mut stats = self.evaluate_stats(batch)?;
        {
            let ctx = LossContext::new(&self.nets, &self.hp, &*self.regularizer);
            for w in batch {
                let t = self.algorithm.targets(&ctx, w, &mut self.rng)?;
                stats.loss_pi += self.algorithm.actor_loss(&ctx, w, &t, &mut self.rng, scale, &mut g_pi)?;
                stats.loss_q += q_loss(&self.nets, w, &t.critic, scale, &mut g_q)?;
                if trains_default {
                    stats.loss_pi0 += default_policy_loss(&ctx, w, scale, &mut g_pi0)?;
                }
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if ![stats.loss_pi, stats.loss_q, stats.loss_pi0].iter().all(|v| v.is_finite())
            || !finite(&g_pi)
            || !finite(&g_q)
            || !finite(&g_pi0)
        {
            return Err(Error::Numeric(format!(
                "non-finite loss or gradient at learner step {} (loss_pi {}, loss_q {}, loss_pi0 {})",
                self.steps + 1,
                stats.loss_pi,
                stats.loss_q,
                stats.loss_pi0
            )));
        }
        self.opt_policy.step(self.nets.policy.params_mut(), &g_pi)?;
        self.opt_critic.step(self.nets.critic.params_mut(), &g_q)?;
        if trains_default {
            self.opt_default.step(self.nets.default.params_mut(), &g_pi0)?;
        }
        self.steps += 1;
        sync_targets(
            &mut self.nets,
            self.steps,
            &self.hp,
            self.regularizer.reference(),
            self.freeze_default,
        );
        Ok(stats)
    }
}
