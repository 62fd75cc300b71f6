//! Finite-difference verification of every loss on small random instances.

use serde::Serialize;

use super::{
    default_policy_loss, q_loss, AgentNets, Algorithm, AlgorithmRegistry, Architecture, HyperParams, LossContext,
    Reference, Regularizer, RegularizerRegistry, Step, Window,
};
use crate::distributions::{ActionSpace, PolicyHead, SquashSpec};
use crate::error::Result;
use crate::numerics::{finite_diff_grad, max_relative_error, Activation, Mlp, Rng};

pub const FD_STEP: f64 = 1e-5;
/// Coordinates whose gradient is below this magnitude are compared
/// absolutely: central differences at `FD_STEP` carry ~1e-10 of rounding noise.
pub const ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckCase {
    pub trial: usize,
    pub head: &'static str,
    pub algorithm: &'static str,
    pub regularizer: &'static str,
    pub loss: &'static str,
    pub params: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub cases: Vec<GradcheckCase>,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradcheckCase> {
        self.cases
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(|c| c.max_rel_error <= tolerance)
    }
}

fn randomize(net: &mut Mlp, rng: &mut Rng, scale: f64) {
    for p in net.params_mut() {
        *p = scale * rng.normal();
    }
}

fn random_hidden(rng: &mut Rng) -> Vec<usize> {
    (0..rng.below(3)).map(|_| 2 + rng.below(7)).collect()
}

struct Instance {
    nets: AgentNets,
    hp: HyperParams,
    window: Window,
}

fn instance(
    rng: &mut Rng,
    space: ActionSpace,
    algorithm: &dyn Algorithm,
    regularizer: &dyn Regularizer,
) -> Result<Instance> {
    let feature_len = 2 + rng.below(4);
    let snapshot = matches!(regularizer.reference(), Reference::PolicySnapshot { .. });
    let default_len = if snapshot { feature_len } else { rng.below(3) };
    let activation = if rng.below(2) == 0 { Activation::Elu } else { Activation::Tanh };
    let policy_hidden = random_hidden(rng);
    let arch = Architecture {
        default_hidden: if snapshot { policy_hidden.clone() } else { random_hidden(rng) },
        policy_hidden,
        critic_hidden: random_hidden(rng),
        activation,
    };
    let head = PolicyHead::for_space(space, SquashSpec::new(0.5 + rng.uniform()).expect("above the floor"));
    let mut nets = AgentNets::new(
        feature_len,
        default_len,
        head,
        algorithm.critic_kind(space),
        &arch,
        rng,
    )?;
    for net in [
        &mut nets.policy,
        &mut nets.default,
        &mut nets.critic,
        &mut nets.policy_target,
        &mut nets.default_target,
        &mut nets.critic_target,
    ] {
        randomize(net, rng, 0.6);
    }
    let hp = HyperParams {
        alpha: 0.05 + rng.uniform(),
        gamma: 0.5 + 0.49 * rng.uniform(),
        entropy_bonus: 0.05 + 0.5 * rng.uniform(),
        mc_samples: 3,
        retrace_lambda: 0.5 + 0.5 * rng.uniform(),
        rho_bar: 0.5 + rng.uniform(),
        c_bar: 0.5 + rng.uniform(),
        ..HyperParams::default()
    };
    let len = 1 + rng.below(4);
    let terminal_end = rng.below(3) == 0;
    let normal_vec = |rng: &mut Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.normal()).collect() };
    let mut steps = Vec::with_capacity(len);
    for j in 0..len {
        let features = normal_vec(rng, feature_len);
        let default_features = normal_vec(rng, default_len);
        let pi = nets.policy_dist(&features, super::Which::Online)?;
        let action = pi.sample(rng);
        let behavior_log_prob = pi.log_prob(&action)? + 0.3 * rng.normal();
        steps.push(Step {
            features,
            default_features,
            action,
            reward: rng.normal(),
            behavior_log_prob,
            terminal: terminal_end && j + 1 == len,
        });
    }
    let window = Window::new(steps, normal_vec(rng, feature_len), normal_vec(rng, default_len))?
        .with_weight(0.5 + rng.uniform());
    Ok(Instance { nets, hp, window })
}

/// Compares analytic and central-difference gradients of one loss.
fn check<F>(params: &[f64], mut loss: F) -> Result<f64>
where
    F: FnMut(&[f64], Option<&mut [f64]>) -> Result<f64>,
{
    let mut analytic = vec![0.0; params.len()];
    loss(params, Some(&mut analytic))?;
    let numeric = finite_diff_grad(|p| loss(p, None), params, FD_STEP)?;
    Ok(max_relative_error(&analytic, &numeric, ERROR_FLOOR))
}

fn check_instance(trial: usize, inst: &Instance, algorithm: &dyn Algorithm, regularizer: &dyn Regularizer, head: &'static str) -> Result<Vec<GradcheckCase>> {
    let Instance { nets, hp, window } = inst;
    let ctx = LossContext::new(nets, hp, regularizer);
    let targets = algorithm.targets(&ctx, window, &mut Rng::new(trial as u64))?;
    let mut scratch = nets.clone();
    let mut cases = Vec::new();
    let mut case = |loss: &'static str, params: usize, err: f64| {
        cases.push(GradcheckCase {
            trial,
            head,
            algorithm: algorithm.name(),
            regularizer: regularizer.name(),
            loss,
            params,
            max_rel_error: err,
        })
    };

    let noise_seed = 1000 + trial as u64;
    let err = check(nets.policy.params(), |p, grad| {
        scratch.policy.params_mut().copy_from_slice(p);
        let ctx = LossContext::new(&scratch, hp, regularizer);
        let mut sink;
        let g = match grad {
            Some(g) => g,
            None => {
                sink = vec![0.0; p.len()];
                &mut sink[..]
            }
        };
        algorithm.actor_loss(&ctx, window, &targets, &mut Rng::new(noise_seed), 1.0, g)
    })?;
    case("actor", nets.policy.num_params(), err);
    scratch.policy.clone_from(&nets.policy);

    let err = check(nets.critic.params(), |p, grad| {
        scratch.critic.params_mut().copy_from_slice(p);
        let mut sink;
        let g = match grad {
            Some(g) => g,
            None => {
                sink = vec![0.0; p.len()];
                &mut sink[..]
            }
        };
        q_loss(&scratch, window, &targets.critic, 1.0, g)
    })?;
    case("critic", nets.critic.num_params(), err);
    scratch.critic.clone_from(&nets.critic);

    let err = check(nets.default.params(), |p, grad| {
        scratch.default.params_mut().copy_from_slice(p);
        let ctx = LossContext::new(&scratch, hp, regularizer);
        let mut sink;
        let g = match grad {
            Some(g) => g,
            None => {
                sink = vec![0.0; p.len()];
                &mut sink[..]
            }
        };
        default_policy_loss(&ctx, window, 1.0, g)
    })?;
    case("default", nets.default.num_params(), err);
    Ok(cases)
}

fn check_mlp(trial: usize, rng: &mut Rng) -> Result<GradcheckCase> {
    let mut sizes = vec![1 + rng.below(5)];
    for _ in 0..1 + rng.below(3) {
        sizes.push(1 + rng.below(16));
    }
    let act = if rng.below(2) == 0 { Activation::Elu } else { Activation::Tanh };
    let net = Mlp::new(&sizes, act, rng)?;
    let input: Vec<f64> = (0..sizes[0]).map(|_| rng.normal()).collect();
    let out_grad: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.normal()).collect();
    let mut scratch = net.clone();
    let err = check(net.params(), |p, grad| {
        scratch.params_mut().copy_from_slice(p);
        let (out, mut tape) = scratch.forward(&input)?;
        if let Some(g) = grad {
            scratch.backward_accumulate(&mut tape, &out_grad, g, 1.0)?;
        }
        Ok(out.iter().zip(&out_grad).map(|(o, g)| o * g).sum())
    })?;
    Ok(GradcheckCase {
        trial,
        head: "none",
        algorithm: "none",
        regularizer: "none",
        loss: "mlp",
        params: net.num_params(),
        max_rel_error: err,
    })
}

/// Runs `trials` random instances. Trial `i` cycles through every
/// (head, algorithm, regularizer) combination and checks the actor, critic
/// and default-policy losses, plus one bare network.
pub fn run_suite(trials: usize, seed: u64) -> Result<GradcheckReport> {
    let algorithms = AlgorithmRegistry::default();
    let regularizers = RegularizerRegistry::default();
    let algo_names: Vec<_> = algorithms.names().collect();
    let reg_names: Vec<_> = regularizers.names().collect();
    let base = Rng::new(seed);
    let mut cases = Vec::new();
    for trial in 0..trials {
        let mut rng = base.fork(trial as u64);
        let (space, head) = if trial % 2 == 0 {
            (ActionSpace::Discrete(2 + rng.below(4)), "categorical")
        } else {
            (ActionSpace::Continuous(1 + rng.below(3)), "gaussian")
        };
        let algorithm = algorithms.build(algo_names[(trial / 2) % algo_names.len()])?;
        let hp = HyperParams::default();
        let regularizer = regularizers.build(reg_names[(trial / 2 / algo_names.len()) % reg_names.len()], &hp)?;
        let inst = instance(&mut rng, space, &*algorithm, &*regularizer)?;
        cases.extend(check_instance(trial, &inst, &*algorithm, &*regularizer, head)?);
        cases.push(check_mlp(trial, &mut rng)?);
    }
    Ok(GradcheckReport { cases })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let report = run_suite(12, 3).unwrap();
        assert_eq!(report.cases.len(), 12 * 4);
        assert!(report.passed(1e-4), "worst case {:?}", report.worst());
    }
}
