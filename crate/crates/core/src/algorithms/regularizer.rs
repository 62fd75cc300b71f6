use std::collections::BTreeMap;
use std::fmt::Debug;

use super::HyperParams;
use crate::distributions::PolicyDistribution;
use crate::error::{Error, Result};

/// Where the reference distribution of a regularizer comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// No reference; the penalty is a function of `π` alone.
    None,
    /// The learned default policy on `x_D`.
    Learned,
    /// A copy of the policy, refreshed every `period` learner steps.
    PolicySnapshot { period: usize },
}

/// A weighted per-step penalty and its gradient with respect to the
/// policy's distribution parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// How the default policy enters the learning objective.
pub trait Regularizer: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    fn reference(&self) -> Reference;

    /// Whether the penalty is part of the return (critic targets and
    /// bootstrap values) or only an auxiliary actor-loss term.
    fn in_targets(&self) -> bool;

    /// Per-step penalty added to the actor loss and, when
    /// [`Regularizer::in_targets`], subtracted from rewards.
    fn penalty(&self, hp: &HyperParams, pi: &PolicyDistribution, reference: Option<&PolicyDistribution>)
        -> Result<Penalty>;

    /// Distillation loss for the default policy and its gradient with
    /// respect to `pi0`'s parameters; `None` when nothing is distilled.
    fn distillation(&self, pi: &PolicyDistribution, pi0: &PolicyDistribution) -> Result<Option<Penalty>>;
}

fn need(reference: Option<&PolicyDistribution>) -> Result<&PolicyDistribution> {
    reference.ok_or_else(|| Error::Contract("KL regularizer evaluated without a reference distribution".into()))
}

/// `−w·H(π)`: weight `λ_H` as an actor-only bonus, `α` as a regularizer.
#[derive(Debug, Clone, Copy)]
pub struct EntropyRegularizer {
    pub in_targets: bool,
}

impl Regularizer for EntropyRegularizer {
    fn name(&self) -> &'static str {
        if self.in_targets {
            "entropy_reg"
        } else {
            "entropy_bonus"
        }
    }

    fn reference(&self) -> Reference {
        Reference::None
    }

    fn in_targets(&self) -> bool {
        self.in_targets
    }

    fn penalty(&self, hp: &HyperParams, pi: &PolicyDistribution, _: Option<&PolicyDistribution>) -> Result<Penalty> {
        let w = if self.in_targets { hp.alpha } else { hp.entropy_bonus };
        Ok(Penalty {
            value: -w * pi.entropy(),
            grad: pi.entropy_grad().into_iter().map(|g| -w * g).collect(),
        })
    }

    fn distillation(&self, _: &PolicyDistribution, _: &PolicyDistribution) -> Result<Option<Penalty>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlDirection {
    /// `KL[π ‖ π0]`.
    Forward,
    /// `KL[π0 ‖ π]`, used for the penalty and the distillation alike.
    Reverse,
}

/// `α·KL` between the policy and the learned default policy.
#[derive(Debug, Clone, Copy)]
pub struct KlRegularizer {
    pub direction: KlDirection,
    pub in_targets: bool,
}

impl Regularizer for KlRegularizer {
    fn name(&self) -> &'static str {
        match (self.direction, self.in_targets) {
            (KlDirection::Forward, true) => "kl_reg",
            (KlDirection::Forward, false) => "kl_bonus",
            (KlDirection::Reverse, true) => "reversed_kl_reg",
            (KlDirection::Reverse, false) => "reversed_kl_bonus",
        }
    }

    fn reference(&self) -> Reference {
        Reference::Learned
    }

    fn in_targets(&self) -> bool {
        self.in_targets
    }

    fn penalty(&self, hp: &HyperParams, pi: &PolicyDistribution, reference: Option<&PolicyDistribution>) -> Result<Penalty> {
        let pi0 = need(reference)?;
        let (kl, grad) = match self.direction {
            KlDirection::Forward => (pi.kl(pi0)?, pi.kl_grads(pi0)?.0),
            KlDirection::Reverse => (pi0.kl(pi)?, pi0.kl_grads(pi)?.1),
        };
        Ok(Penalty {
            value: hp.alpha * kl,
            grad: grad.into_iter().map(|g| hp.alpha * g).collect(),
        })
    }

    fn distillation(&self, pi: &PolicyDistribution, pi0: &PolicyDistribution) -> Result<Option<Penalty>> {
        let (value, grad) = match self.direction {
            KlDirection::Forward => (pi.kl(pi0)?, pi.kl_grads(pi0)?.1),
            KlDirection::Reverse => (pi0.kl(pi)?, pi0.kl_grads(pi)?.0),
        };
        Ok(Some(Penalty { value, grad }))
    }
}

/// `α·KL[π ‖ π_old]` against a periodically refreshed copy of the policy.
#[derive(Debug, Clone, Copy)]
pub struct OldPolicyRegularizer {
    pub period: usize,
}

impl Regularizer for OldPolicyRegularizer {
    fn name(&self) -> &'static str {
        "kl_to_old_policy"
    }

    fn reference(&self) -> Reference {
        Reference::PolicySnapshot { period: self.period }
    }

    fn in_targets(&self) -> bool {
        true
    }

    fn penalty(&self, hp: &HyperParams, pi: &PolicyDistribution, reference: Option<&PolicyDistribution>) -> Result<Penalty> {
        KlRegularizer {
            direction: KlDirection::Forward,
            in_targets: true,
        }
        .penalty(hp, pi, reference)
    }

    fn distillation(&self, _: &PolicyDistribution, _: &PolicyDistribution) -> Result<Option<Penalty>> {
        Ok(None)
    }
}

pub type RegularizerFactory = fn(&HyperParams) -> Box<dyn Regularizer>;

/// Regularizers selectable by name.
pub struct RegularizerRegistry {
    factories: BTreeMap<&'static str, RegularizerFactory>,
}

impl RegularizerRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: RegularizerFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str, hp: &HyperParams) -> Result<Box<dyn Regularizer>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            Error::config("regularizer", format!("unknown regularizer `{name}` (known: {})", known.join(", ")))
        })?;
        Ok(factory(hp))
    }
}

impl Default for RegularizerRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("entropy_bonus", |_| Box::new(EntropyRegularizer { in_targets: false }));
        r.register("entropy_reg", |_| Box::new(EntropyRegularizer { in_targets: true }));
        r.register("kl_bonus", |_| {
            Box::new(KlRegularizer {
                direction: KlDirection::Forward,
                in_targets: false,
            })
        });
        r.register("kl_reg", |_| {
            Box::new(KlRegularizer {
                direction: KlDirection::Forward,
                in_targets: true,
            })
        });
        r.register("kl_to_old_policy", |hp| {
            Box::new(OldPolicyRegularizer {
                period: hp.old_policy_period,
            })
        });
        r.register("reversed_kl_bonus", |_| {
            Box::new(KlRegularizer {
                direction: KlDirection::Reverse,
                in_targets: false,
            })
        });
        r.register("reversed_kl_reg", |_| {
            Box::new(KlRegularizer {
                direction: KlDirection::Reverse,
                in_targets: true,
            })
        });
        r
    }
}
