//! Action distributions: categorical and squashed diagonal Gaussian heads,
//! with analytic KL, entropy, log-probabilities and their gradients.
//!
//! Gradients are taken with respect to the distribution parameters: logits
//! for [`Categorical`], `[mean.., std..]` for [`DiagGaussian`]. A
//! [`PolicyHead`] maps those back onto the raw network output.

mod categorical;
mod gaussian;

pub use categorical::Categorical;
pub use gaussian::{squash_backward, squash_head, DiagGaussian, SquashSpec, SIGMA_MIN};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ActionSpace {
    /// Width of the action when fed to a network (one-hot for discrete).
    pub fn encoded_len(&self) -> usize {
        match *self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(*i),
            Action::Continuous(_) => None,
        }
    }

    /// Network encoding of the action: one-hot over `n` or the raw vector.
    pub fn encode(&self, space: ActionSpace) -> Vec<f64> {
        match (self, space) {
            (Action::Discrete(i), ActionSpace::Discrete(n)) => {
                let mut v = vec![0.0; n];
                if *i < n {
                    v[*i] = 1.0;
                }
                v
            }
            (Action::Continuous(a), _) => a.clone(),
            (Action::Discrete(_), ActionSpace::Continuous(d)) => vec![0.0; d],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyDistribution {
    Categorical(Categorical),
    Gaussian(DiagGaussian),
}

fn mismatch() -> Error {
    Error::invalid("distributions of different families")
}

impl PolicyDistribution {
    pub fn kl(&self, other: &PolicyDistribution) -> Result<f64> {
        match (self, other) {
            (Self::Categorical(p), Self::Categorical(q)) => p.kl(q),
            (Self::Gaussian(p), Self::Gaussian(q)) => p.kl(q),
            _ => Err(mismatch()),
        }
    }

    /// Gradients of `KL(self ‖ other)` with respect to each side's parameters.
    pub fn kl_grads(&self, other: &PolicyDistribution) -> Result<(Vec<f64>, Vec<f64>)> {
        match (self, other) {
            (Self::Categorical(p), Self::Categorical(q)) => p.kl_grads(q),
            (Self::Gaussian(p), Self::Gaussian(q)) => p.kl_grads(q),
            _ => Err(mismatch()),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            Self::Categorical(p) => p.entropy(),
            Self::Gaussian(p) => p.entropy(),
        }
    }

    pub fn entropy_grad(&self) -> Vec<f64> {
        match self {
            Self::Categorical(p) => p.entropy_grad(),
            Self::Gaussian(p) => p.entropy_grad(),
        }
    }

    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (Self::Categorical(p), Action::Discrete(a)) => p.log_prob(*a),
            (Self::Gaussian(p), Action::Continuous(a)) => p.log_prob(a),
            _ => Err(Error::invalid("action does not match the distribution family")),
        }
    }

    pub fn log_prob_grad(&self, action: &Action) -> Result<Vec<f64>> {
        match (self, action) {
            (Self::Categorical(p), Action::Discrete(a)) => p.log_prob_grad(*a),
            (Self::Gaussian(p), Action::Continuous(a)) => p.log_prob_grad(a),
            _ => Err(Error::invalid("action does not match the distribution family")),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Action {
        match self {
            Self::Categorical(p) => Action::Discrete(p.sample(rng)),
            Self::Gaussian(p) => Action::Continuous(p.rsample(rng).0),
        }
    }

    /// Number of distribution parameters (length of every gradient vector).
    pub fn param_len(&self) -> usize {
        match self {
            Self::Categorical(p) => p.num_actions(),
            Self::Gaussian(p) => 2 * p.dim(),
        }
    }

    pub fn as_categorical(&self) -> Option<&Categorical> {
        match self {
            Self::Categorical(p) => Some(p),
            Self::Gaussian(_) => None,
        }
    }

    pub fn as_gaussian(&self) -> Option<&DiagGaussian> {
        match self {
            Self::Gaussian(p) => Some(p),
            Self::Categorical(_) => None,
        }
    }
}

/// How a network's raw output becomes a [`PolicyDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyHead {
    /// Output = logits.
    Categorical { actions: usize },
    /// Output = `[raw_mean.., raw_log_sigma..]`, squashed.
    Gaussian { dim: usize, squash: SquashSpec },
}

impl PolicyHead {
    pub fn for_space(space: ActionSpace, squash: SquashSpec) -> Self {
        match space {
            ActionSpace::Discrete(n) => PolicyHead::Categorical { actions: n },
            ActionSpace::Continuous(d) => PolicyHead::Gaussian { dim: d, squash },
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            PolicyHead::Categorical { actions } => actions,
            PolicyHead::Gaussian { dim, .. } => 2 * dim,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match *self {
            PolicyHead::Categorical { actions } => ActionSpace::Discrete(actions),
            PolicyHead::Gaussian { dim, .. } => ActionSpace::Continuous(dim),
        }
    }

    pub fn distribution(&self, raw: &[f64]) -> Result<PolicyDistribution> {
        crate::error::check_len("policy head output", raw.len(), self.output_len())?;
        match *self {
            PolicyHead::Categorical { .. } => Ok(PolicyDistribution::Categorical(Categorical::from_logits(
                raw.to_vec(),
            )?)),
            PolicyHead::Gaussian { dim, squash } => Ok(PolicyDistribution::Gaussian(squash_head(
                &raw[..dim],
                &raw[dim..],
                squash,
            )?)),
        }
    }

    /// Maps a distribution-parameter gradient onto the raw output.
    pub fn backward(&self, raw: &[f64], dist_grad: &[f64]) -> Vec<f64> {
        match *self {
            PolicyHead::Categorical { .. } => dist_grad.to_vec(),
            PolicyHead::Gaussian { dim, squash } => squash_backward(&raw[..dim], &raw[dim..], squash, dist_grad),
        }
    }
}
