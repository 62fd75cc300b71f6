use serde::{Deserialize, Serialize};

use crate::distributions::{Action, ActionSpace, PolicyDistribution, PolicyHead};
use crate::error::{check_len, Error, Result};
use crate::numerics::{Activation, Mlp, Rng};

/// What the critic network computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    /// `x ↦ Q(x, ·)`, one output per discrete action.
    ActionValues,
    /// `x ⊕ a ↦ Q(x, a)`, for continuous actions.
    ActionInput,
    /// `x ↦ V(x)`.
    StateValue,
}

/// Online or target copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Online,
    Target,
}

/// Hidden-layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub default_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            policy_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            default_hidden: vec![64, 64],
            activation: Activation::Elu,
        }
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Policy `θ`, default policy `φ`, critic `ψ` and their target copies.
#[derive(Debug, Clone)]
pub struct AgentNets {
    pub policy: Mlp,
    pub default: Mlp,
    pub critic: Mlp,
    pub policy_target: Mlp,
    pub default_target: Mlp,
    pub critic_target: Mlp,
    pub head: PolicyHead,
    pub critic_kind: CriticKind,
}

impl AgentNets {
    /// Randomly initialized nets. The output layers of both policies start at
    /// zero, so `π` and `π0` begin uniform (categorical) or centred (Gaussian).
    pub fn new(
        feature_len: usize,
        default_len: usize,
        head: PolicyHead,
        critic_kind: CriticKind,
        arch: &Architecture,
        rng: &mut Rng,
    ) -> Result<Self> {
        let act = arch.activation;
        let mut policy = Mlp::new(&sizes(feature_len, &arch.policy_hidden, head.output_len()), act, rng)?;
        zero_output_layer(&mut policy);
        let mut default = Mlp::new(&sizes(default_len, &arch.default_hidden, head.output_len()), act, rng)?;
        zero_output_layer(&mut default);
        let (critic_in, critic_out) = critic_shape(critic_kind, feature_len, head.action_space())?;
        let critic = Mlp::new(&sizes(critic_in, &arch.critic_hidden, critic_out), act, rng)?;
        Self::from_parts(policy, default, critic, head, critic_kind)
    }

    /// Builds from explicit online nets; targets start as copies.
    pub fn from_parts(policy: Mlp, default: Mlp, critic: Mlp, head: PolicyHead, critic_kind: CriticKind) -> Result<Self> {
        if policy.output_size() != head.output_len() || default.output_size() != head.output_len() {
            return Err(Error::config("nets", "policy outputs do not match the action head"));
        }
        let (critic_in, critic_out) = critic_shape(critic_kind, policy.input_size(), head.action_space())?;
        if critic.input_size() != critic_in || critic.output_size() != critic_out {
            return Err(Error::config(
                "nets",
                format!("critic must map {critic_in} inputs to {critic_out} outputs for {critic_kind:?}"),
            ));
        }
        Ok(Self {
            policy_target: policy.clone(),
            default_target: default.clone(),
            critic_target: critic.clone(),
            policy,
            default,
            critic,
            head,
            critic_kind,
        })
    }

    pub fn action_space(&self) -> ActionSpace {
        self.head.action_space()
    }

    pub fn policy_net(&self, which: Which) -> &Mlp {
        match which {
            Which::Online => &self.policy,
            Which::Target => &self.policy_target,
        }
    }

    pub fn default_net(&self, which: Which) -> &Mlp {
        match which {
            Which::Online => &self.default,
            Which::Target => &self.default_target,
        }
    }

    pub fn critic_net(&self, which: Which) -> &Mlp {
        match which {
            Which::Online => &self.critic,
            Which::Target => &self.critic_target,
        }
    }

    pub fn policy_dist(&self, features: &[f64], which: Which) -> Result<PolicyDistribution> {
        self.head.distribution(&self.policy_net(which).predict(features)?)
    }

    pub fn default_dist(&self, default_features: &[f64], which: Which) -> Result<PolicyDistribution> {
        self.head.distribution(&self.default_net(which).predict(default_features)?)
    }

    /// Input row of the critic for `(x, a)`; the action is ignored unless it is an input.
    pub fn critic_input(&self, features: &[f64], action: &[f64]) -> Vec<f64> {
        match self.critic_kind {
            CriticKind::ActionInput => {
                let mut v = Vec::with_capacity(features.len() + action.len());
                v.extend_from_slice(features);
                v.extend_from_slice(action);
                v
            }
            _ => features.to_vec(),
        }
    }

    /// `Q(x, a)` (or `V(x)` for a state-value critic).
    pub fn q_value(&self, features: &[f64], action: &Action, which: Which) -> Result<f64> {
        let net = self.critic_net(which);
        match (self.critic_kind, action) {
            (CriticKind::ActionValues, Action::Discrete(a)) => {
                let q = net.predict(features)?;
                q.get(*a)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("action {a} outside {} critic outputs", q.len())))
            }
            (CriticKind::ActionInput, Action::Continuous(a)) => {
                check_len("critic action", a.len(), self.action_space().encoded_len())?;
                Ok(net.predict(&self.critic_input(features, a))?[0])
            }
            (CriticKind::StateValue, _) => Ok(net.predict(features)?[0]),
            _ => Err(Error::invalid("action does not match the critic")),
        }
    }
}

fn critic_shape(kind: CriticKind, feature_len: usize, space: ActionSpace) -> Result<(usize, usize)> {
    match (kind, space) {
        (CriticKind::ActionValues, ActionSpace::Discrete(n)) => Ok((feature_len, n)),
        (CriticKind::ActionInput, ActionSpace::Continuous(d)) => Ok((feature_len + d, 1)),
        (CriticKind::StateValue, _) => Ok((feature_len, 1)),
        _ => Err(Error::config(
            "algorithm",
            format!("critic {kind:?} is not available for {space:?} actions"),
        )),
    }
}

fn zero_output_layer(net: &mut Mlp) {
    let last = net.num_layers() - 1;
    let (w, b) = net.layer_mut(last);
    w.fill(0.0);
    b.fill(0.0);
}
