//! Tabular networks and exactly enumerated replay for oracle tests.
#![allow(dead_code)]

use asymkl::algorithms::{
    actor_loss_q, q_loss, retrace_targets, vtrace_targets, AgentNets, CriticKind, HyperParams, LossContext,
    Regularizer, RegularizerRegistry, Step, Window,
};
use asymkl::distributions::{Action, PolicyHead};
use asymkl::envs::TabularMdp;
use asymkl::numerics::{Activation, Mlp, Rng};
use asymkl::observation::one_hot;

/// Single affine layer on one-hot inputs whose output for input `i` is `rows[i]`.
pub fn table_net(rows: &[Vec<f64>]) -> Mlp {
    let inputs = rows.len();
    let outputs = rows[0].len();
    let mut net = Mlp::zeros(&[inputs, outputs], &[]).unwrap();
    let (w, _) = net.layer_mut(0);
    for (i, row) in rows.iter().enumerate() {
        for (o, v) in row.iter().enumerate() {
            w[o * inputs + i] = *v;
        }
    }
    net
}

/// Input-free net that always outputs `values`.
pub fn vector_net(values: &[f64]) -> Mlp {
    let mut net = Mlp::zeros(&[0, values.len()], &[]).unwrap();
    net.layer_mut(0).1.copy_from_slice(values);
    net
}

pub fn log_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect()
}

/// Strictly positive random distribution with entries at least `floor`.
pub fn random_dist(rng: &mut Rng, n: usize, floor: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.uniform() + floor).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

pub fn random_policy(rng: &mut Rng, ns: usize, na: usize, floor: f64) -> Vec<Vec<f64>> {
    (0..ns).map(|_| random_dist(rng, na, floor)).collect()
}

/// Tabular policy on one-hot states, a fixed input-free default policy and a zero critic.
pub fn tabular_nets(policy: &[Vec<f64>], default: &[f64], critic_kind: CriticKind) -> AgentNets {
    let ns = policy.len();
    let na = default.len();
    let out = match critic_kind {
        CriticKind::StateValue => 1,
        _ => na,
    };
    AgentNets::from_parts(
        table_net(&log_rows(policy)),
        vector_net(&default.iter().map(|p| p.ln()).collect::<Vec<_>>()),
        Mlp::zeros_uniform(&[ns, out], Activation::Identity).unwrap(),
        PolicyHead::Categorical { actions: na },
        critic_kind,
    )
    .unwrap()
}

/// Every length-`len` trajectory under `behavior` from every non-terminal
/// start state, weighted by its probability times `start[s]`.
pub fn enumerate_windows(mdp: &TabularMdp, behavior: &[Vec<f64>], start: &[f64], len: usize) -> Vec<Window> {
    let ns = mdp.num_states;
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<Step>, usize, f64)> = (0..ns)
        .filter(|&s| !mdp.terminal[s] && start[s] > 0.0)
        .map(|s| (Vec::new(), s, start[s]))
        .collect();
    while let Some((steps, s, weight)) = stack.pop() {
        for a in 0..mdp.num_actions {
            let pa = behavior[s][a];
            if pa == 0.0 {
                continue;
            }
            for &(t, p) in mdp.next(s, a) {
                if p == 0.0 {
                    continue;
                }
                let mut steps = steps.clone();
                let terminal = mdp.terminal[t];
                steps.push(Step {
                    features: one_hot(s, ns),
                    default_features: vec![],
                    action: Action::Discrete(a),
                    reward: mdp.reward(s, a),
                    behavior_log_prob: pa.ln(),
                    terminal,
                });
                let w = weight * pa * p;
                if terminal || steps.len() == len {
                    out.push(Window::new(steps, one_hot(t, ns), vec![]).unwrap().with_weight(w));
                } else {
                    stack.push((steps, t, w));
                }
            }
        }
    }
    out
}

/// Which off-policy operator produces the critic targets.
#[derive(Debug, Clone, Copy)]
pub enum Operator {
    Retrace,
    VTrace,
}

/// Repeated expected-gradient fitting of the critic to the operator's
/// targets over exactly enumerated windows, syncing the target critic after
/// every step. Returns the critic table and the number of iterations.
pub fn fit_critic(
    nets: &mut AgentNets,
    hp: &HyperParams,
    regularizer: &dyn Regularizer,
    windows: &[Window],
    op: Operator,
    max_iters: usize,
) -> (Vec<Vec<f64>>, usize) {
    let ns = nets.critic.input_size();
    let total: f64 = windows.iter().map(|w| w.weight * w.len() as f64).sum();
    let mut rng = Rng::new(0);
    let lr = 0.25;
    for it in 1..=max_iters {
        let mut grad = vec![0.0; nets.critic.num_params()];
        {
            let ctx = LossContext::new(nets, hp, regularizer);
            for w in windows {
                let targets = match op {
                    Operator::Retrace => retrace_targets(&ctx, w, &mut rng).unwrap(),
                    Operator::VTrace => vtrace_targets(&ctx, w).unwrap().values,
                };
                q_loss(nets, w, &targets, 1.0 / total, &mut grad).unwrap();
            }
        }
        let step = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) * lr;
        for (p, g) in nets.critic.params_mut().iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        nets.critic_target.clone_from(&nets.critic);
        if step < 1e-11 {
            return (critic_table(&nets.critic, ns), it);
        }
    }
    (critic_table(&nets.critic, ns), max_iters)
}

pub fn critic_table(critic: &Mlp, ns: usize) -> Vec<Vec<f64>> {
    (0..ns).map(|s| critic.predict(&one_hot(s, ns)).unwrap()).collect()
}

/// Random MDP whose transitions are deterministic.
pub fn deterministic_mdp(rng: &mut Rng, ns: usize, na: usize, gamma: f64) -> TabularMdp {
    let mut mdp = TabularMdp::random(ns, na, gamma, rng);
    for row in &mut mdp.transitions {
        *row = vec![(rng.below(ns), 1.0)];
    }
    mdp
}

/// A window of random features, actions drawn from the online policy and random rewards.
pub fn random_window(rng: &mut Rng, nets: &AgentNets, feature_len: usize, default_len: usize, len: usize) -> Window {
    let normal = |rng: &mut Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.normal()).collect() };
    let mut steps = Vec::with_capacity(len);
    for _ in 0..len {
        let features = normal(rng, feature_len);
        let pi = nets.policy_dist(&features, asymkl::algorithms::Which::Online).unwrap();
        let action = pi.sample(rng);
        steps.push(Step {
            behavior_log_prob: pi.log_prob(&action).unwrap() + 0.3 * rng.normal(),
            default_features: normal(rng, default_len),
            features,
            action,
            reward: rng.normal(),
            terminal: false,
        });
    }
    Window::new(steps, normal(rng, feature_len), normal(rng, default_len)).unwrap()
}

/// Overwrites every parameter of `net` with `N(0, scale²)` draws.
pub fn randomize(net: &mut Mlp, rng: &mut Rng, scale: f64) {
    for p in net.params_mut() {
        *p = scale * rng.normal();
    }
}

/// Per-step actor losses and the summed policy gradient for one regularizer.
pub fn per_step_actor(nets: &AgentNets, hp: &HyperParams, name: &str, w: &Window) -> (Vec<f64>, Vec<f64>) {
    let reg = RegularizerRegistry::default().build(name, hp).unwrap();
    let ctx = LossContext::new(nets, hp, &*reg);
    let mut losses = Vec::new();
    let mut grad = vec![0.0; nets.policy.num_params()];
    for s in &w.steps {
        let single = Window::new(vec![s.clone()], w.next_features.clone(), w.next_default_features.clone()).unwrap();
        losses.push(actor_loss_q(&ctx, &single, &mut Rng::new(0), 1.0, &mut grad).unwrap());
    }
    (losses, grad)
}
