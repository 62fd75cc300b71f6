use serde::{Deserialize, Serialize};

use crate::distributions::Action;
use crate::error::{Error, Result};

/// One recorded transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Full history features `x_t` seen by the agent policy and critic.
    pub features: Vec<f64>,
    /// Masked features `x_D` seen by the default policy.
    pub default_features: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    /// `log μ(a_t|x_t)` under the policy that acted.
    pub behavior_log_prob: f64,
    /// The episode terminated after this step; nothing is bootstrapped past it.
    pub terminal: bool,
}

/// Up to `K` consecutive steps of one episode plus the observation that follows them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub steps: Vec<Step>,
    pub next_features: Vec<f64>,
    pub next_default_features: Vec<f64>,
    /// Multiplier on this window's contribution to every loss.
    pub weight: f64,
}

impl Window {
    pub fn new(steps: Vec<Step>, next_features: Vec<f64>, next_default_features: Vec<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::invalid("a window needs at least one step"));
        }
        if steps[..steps.len() - 1].iter().any(|s| s.terminal) {
            return Err(Error::invalid("only the last step of a window may be terminal"));
        }
        Ok(Self {
            steps,
            next_features,
            next_default_features,
            weight: 1.0,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Whether the value of `next_features` is needed.
    pub fn bootstraps(&self) -> bool {
        !self.steps.last().map_or(true, |s| s.terminal)
    }
}
