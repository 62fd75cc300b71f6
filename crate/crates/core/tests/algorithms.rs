mod common;

use asymkl::algorithms::{
    actor_loss_q, default_policy_loss, kl_per_step, kstep_targets, q_loss, retrace_targets, sync_targets,
    vtrace_targets, AgentNets, AlgorithmRegistry, Architecture, CriticKind, HyperParams, Learner, LossContext,
    Reference, RegularizerRegistry, Step, Which, Window,
};
use asymkl::analysis::regularized_dp_eval;
use asymkl::distributions::{Action, Categorical, PolicyDistribution, PolicyHead};
use asymkl::numerics::{OptimizerKind, OptimizerState, Rng};
use asymkl::observation::one_hot;
use common::*;

fn small_nets(rng: &mut Rng, critic: CriticKind, feature_len: usize, default_len: usize, na: usize) -> AgentNets {
    let arch = Architecture {
        policy_hidden: vec![5],
        critic_hidden: vec![5],
        default_hidden: vec![4],
        ..Architecture::default()
    };
    let mut nets = AgentNets::new(
        feature_len,
        default_len,
        PolicyHead::Categorical { actions: na },
        critic,
        &arch,
        rng,
    )
    .unwrap();
    for net in [&mut nets.policy, &mut nets.default, &mut nets.critic] {
        randomize(net, rng, 0.7);
    }
    nets.policy_target = nets.policy.clone();
    nets.default_target = nets.default.clone();
    nets.critic_target = nets.critic.clone();
    nets
}

fn regularizer(name: &str, hp: &HyperParams) -> Box<dyn asymkl::algorithms::Regularizer> {
    RegularizerRegistry::default().build(name, hp).unwrap()
}

fn cat(probs: &[f64]) -> PolicyDistribution {
    PolicyDistribution::Categorical(Categorical::from_probs(probs).unwrap())
}

#[test]
fn kl_per_step_examples() {
    let p = cat(&[0.2, 0.5, 0.3]);
    assert!(kl_per_step(&p, &p).unwrap().abs() < 1e-15);
    let u = cat(&[1.0 / 3.0; 3]);
    let expected = 3f64.ln() - p.entropy();
    assert!((kl_per_step(&p, &u).unwrap() - expected).abs() < 1e-12);

    let mut rng = Rng::new(4);
    let nets = small_nets(&mut rng, CriticKind::ActionValues, 3, 2, 4);
    for _ in 0..20 {
        let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let xd: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
        let pi = nets.policy_dist(&x, Which::Online).unwrap();
        let pi0 = nets.default_dist(&xd, Which::Online).unwrap();
        let (a, b) = (pi.as_categorical().unwrap().probs(), pi0.as_categorical().unwrap().probs());
        let direct: f64 = a.iter().zip(&b).map(|(p, q)| p * (p / q).ln()).sum();
        assert!((kl_per_step(&pi, &pi0).unwrap() - direct).abs() < 1e-12);
    }
}

fn step(features: Vec<f64>, action: usize, reward: f64) -> Step {
    Step {
        features,
        default_features: vec![],
        action: Action::Discrete(action),
        reward,
        behavior_log_prob: (0.5f64).ln(),
        terminal: false,
    }
}

fn zero_critic_nets(ns: usize) -> AgentNets {
    tabular_nets(&vec![vec![0.5, 0.5]; ns], &[0.5, 0.5], CriticKind::ActionValues)
}

#[test]
fn kstep_undiscounted_sum_with_zero_critic() {
    let nets = zero_critic_nets(3);
    let hp = HyperParams {
        alpha: 0.0,
        gamma: 1.0,
        ..HyperParams::default()
    };
    let reg = regularizer("kl_reg", &hp);
    let ctx = LossContext::new(&nets, &hp, &*reg);
    let rewards = [1.0, -2.0, 0.5, 3.0];
    let steps = rewards.iter().enumerate().map(|(i, r)| step(one_hot(i % 3, 3), 0, *r)).collect();
    let w = Window::new(steps, one_hot(0, 3), vec![]).unwrap();
    let t = kstep_targets(&ctx, &w, &mut Rng::new(0)).unwrap();
    assert_eq!(t, vec![2.5, 1.5, 3.5, 3.0]);
}

#[test]
fn kstep_zero_rewards_discount_the_bootstrap() {
    let mut nets = zero_critic_nets(2);
    nets.critic_target = table_net(&[vec![0.0, 0.0], vec![4.0, 2.0]]);
    let hp = HyperParams {
        alpha: 0.0,
        gamma: 0.9,
        ..HyperParams::default()
    };
    let reg = regularizer("kl_reg", &hp);
    let ctx = LossContext::new(&nets, &hp, &*reg);
    let steps = (0..3).map(|_| step(one_hot(0, 2), 1, 0.0)).collect();
    let w = Window::new(steps, one_hot(1, 2), vec![]).unwrap();
    let t = kstep_targets(&ctx, &w, &mut Rng::new(0)).unwrap();
    let v_hat = 3.0;
    for (j, q) in t.iter().enumerate() {
        assert!((q - 0.9f64.powi(3 - j as i32) * v_hat).abs() < 1e-12);
    }
}

#[test]
fn terminal_window_does_not_bootstrap() {
    let mut nets = zero_critic_nets(2);
    nets.critic_target = table_net(&[vec![7.0, 7.0], vec![7.0, 7.0]]);
    let hp = HyperParams {
        alpha: 0.0,
        gamma: 0.5,
        ..HyperParams::default()
    };
    let reg = regularizer("kl_reg", &hp);
    let ctx = LossContext::new(&nets, &hp, &*reg);
    let mut last = step(one_hot(0, 2), 0, 1.0);
    last.terminal = true;
    let w = Window::new(vec![step(one_hot(1, 2), 0, 2.0), last], one_hot(1, 2), vec![]).unwrap();
    assert_eq!(kstep_targets(&ctx, &w, &mut Rng::new(0)).unwrap(), vec![2.5, 1.0]);
}

/// Exact regularized `Q` loaded into the target critic of tabular nets.
fn exact_nets(seed: u64, critic: CriticKind) -> (asymkl::envs::TabularMdp, AgentNets, HyperParams, Vec<Vec<f64>>) {
    let mut rng = Rng::new(seed);
    let (ns, na) = (4, 3);
    let mut mdp = deterministic_mdp(&mut rng, ns, na, 0.8);
    mdp.mask_map = vec![0; ns];
    let pi = random_policy(&mut rng, ns, na, 0.2);
    let pi0 = random_dist(&mut rng, na, 0.2);
    let hp = HyperParams {
        alpha: 0.4,
        gamma: 0.8,
        retrace_lambda: 1.0,
        ..HyperParams::default()
    };
    let dp = regularized_dp_eval(&mdp, &pi, &[pi0.clone()], hp.alpha).unwrap();
    let mut nets = tabular_nets(&pi, &pi0, critic);
    let table: Vec<Vec<f64>> = match critic {
        CriticKind::StateValue => dp.v.iter().map(|v| vec![*v]).collect(),
        _ => (0..ns).map(|s| (0..na).map(|a| dp.q(s, a)).collect()).collect(),
    };
    nets.critic = table_net(&table);
    nets.critic_target = nets.critic.clone();
    (mdp, nets, hp, pi)
}

#[test]
fn retrace_on_exact_q_is_a_fixed_point() {
    let (mdp, nets, hp, pi) = exact_nets(1, CriticKind::ActionValues);
    let reg = regularizer("kl_reg", &hp);
    let ctx = LossContext::new(&nets, &hp, &*reg);
    let windows = enumerate_windows(&mdp, &pi, &[0.25; 4], 3);
    for w in &windows {
        let t = retrace_targets(&ctx, w, &mut Rng::new(0)).unwrap();
        for (s, target) in w.steps.iter().zip(t) {
            let q = nets.q_value(&s.features, &s.action, Which::Target).unwrap();
            assert!((target - q).abs() < 1e-9, "{target} vs {q}");
        }
    }
}

#[test]
fn retrace_with_zero_lambda_is_one_step() {
    let mut rng = Rng::new(8);
    let mut nets = small_nets(&mut rng, CriticKind::ActionValues, 3, 2, 3);
    randomize(&mut nets.critic_target, &mut rng, 0.5);
    let hp = HyperParams {
        retrace_lambda: 0.0,
        alpha: 0.3,
        gamma: 0.9,
        ..HyperParams::default()
    };
    let reg = regularizer("kl_reg", &hp);
    let ctx = LossContext::new(&nets, &hp, &*reg);
    let w = random_window(&mut rng, &nets, 3, 2, 4);
    let mut r2 = Rng::new(0);
    let t = retrace_targets(&ctx, &w, &mut r2).unwrap();
    for j in 0..w.len() {
        let (x, xd) = match w.steps.get(j + 1) {
            Some(s) => (&s.features, &s.default_features),
            None => (&w.next_features, &w.next_default_features),
        };
        let v = asymkl::algorithms::bootstrap_value(&ctx, x, xd, &mut r2).unwrap();
        assert!((t[j] - (w.steps[j].reward + hp.gamma * v)).abs() < 1e-12);
    }
}

#[test]
fn vtrace_on_exact_v_is_a_fixed_point() {
    let (mdp, nets, hp, pi) = exact_nets(2, CriticKind::StateValue);
    let reg = regularizer("kl_reg", &hp);
    let ctx = LossContext::new(&nets, &hp, &*reg);
    // Per window only the expectation vanishes, so average the first-step
    // targets over every trajectory from each start state.
    for s in 0..4 {
        let mut start = [0.0; 4];
        start[s] = 1.0;
        let mean: f64 = enumerate_windows(&mdp, &pi, &start, 3)
            .iter()
            .map(|w| w.weight * vtrace_targets(&ctx, w).unwrap().values[0])
            .sum();
        let exact = nets.critic.predict(&one_hot(s, 4)).unwrap()[0];
        assert!((mean - exact).abs() < 1e-9, "{mean} vs {exact}");
    }
}

#[test]
fn vtrace_with_zero_gamma_is_the_recursion_base() {
    let mut rng = Rng::new(9);
    let nets = small_nets(&mut rng, CriticKind::StateValue, 3, 2, 3);
    let hp = HyperParams {
        gamma: 0.0,
        alpha: 0.2,
        rho_bar: 1.0,
        ..HyperParams::default()
    };
    let reg = regularizer("kl_reg", &hp);
    let ctx = LossContext::new(&nets, &hp, &*reg);
    let w = random_window(&mut rng, &nets, 3, 2, 3);
    let t = vtrace_targets(&ctx, &w).unwrap();
    for (j, s) in w.steps.iter().enumerate() {
        let v = nets.critic.predict(&s.features).unwrap()[0];
        let pi = nets.policy_dist(&s.features, Which::Online).unwrap();
        let pi0 = nets.default_dist(&s.default_features, Which::Target).unwrap();
        let cost = hp.alpha * pi.kl(&pi0).unwrap();
        let rho = (pi.log_prob(&s.action).unwrap() - s.behavior_log_prob).exp().min(1.0);
        let expected = v + rho * (s.reward - cost - v);
        assert!((t.values[j] - expected).abs() < 1e-12);
        assert!((t.advantages[j] - rho * (s.reward - cost - v)).abs() < 1e-12);
    }
}

#[test]
fn off_policy_fitting_reaches_regularized_values() {
    for seed in 0..2 {
        let mut rng = Rng::new(100 + seed);
        let (ns, na) = (3, 2);
        let mut mdp = asymkl::envs::TabularMdp::random(ns, na, 0.9, &mut rng);
        mdp.mask_map = vec![0; ns];
        mdp.terminal[ns - 1] = true;
        let pi = random_policy(&mut rng, ns, na, 0.2);
        let mu = random_policy(&mut rng, ns, na, 0.2);
        let pi0 = random_dist(&mut rng, na, 0.2);
        let hp = HyperParams {
            alpha: 0.5,
            gamma: 0.9,
            rho_bar: 1e3,
            ..HyperParams::default()
        };
        let dp = regularized_dp_eval(&mdp, &pi, &[pi0.clone()], hp.alpha).unwrap();
        let reg = regularizer("kl_reg", &hp);
        let windows = enumerate_windows(&mdp, &mu, &[0.5, 0.5, 0.0], 2);

        let mut nets = tabular_nets(&pi, &pi0, CriticKind::ActionValues);
        let (q, _) = fit_critic(&mut nets, &hp, &*reg, &windows, Operator::Retrace, 50_000);
        for s in 0..ns - 1 {
            for a in 0..na {
                assert!((q[s][a] - dp.q(s, a)).abs() < 1e-6, "retrace q({s},{a}) {} vs {}", q[s][a], dp.q(s, a));
            }
        }
        let mut nets = tabular_nets(&pi, &pi0, CriticKind::StateValue);
        let (v, _) = fit_critic(&mut nets, &hp, &*reg, &windows, Operator::VTrace, 50_000);
        for s in 0..ns - 1 {
            assert!((v[s][0] - dp.v[s]).abs() < 1e-6, "v-trace v({s}) {} vs {}", v[s][0], dp.v[s]);
        }
    }
}

#[test]
fn q_loss_examples() {
    let mut nets = zero_critic_nets(1);
    let w = Window::new(vec![step(vec![1.0], 0, 0.0)], vec![1.0], vec![]).unwrap();
    let mut g = vec![0.0; nets.critic.num_params()];
    assert_eq!(q_loss(&nets, &w, &[1.0], 1.0, &mut g).unwrap(), 1.0);
    nets.critic = table_net(&[vec![1.0, 5.0]]);
    let mut g = vec![0.0; nets.critic.num_params()];
    assert_eq!(q_loss(&nets, &w, &[1.0], 1.0, &mut g).unwrap(), 0.0);
    assert!(g.iter().all(|x| *x == 0.0));
}

#[test]
fn losses_read_only_their_own_parameters() {
    let mut rng = Rng::new(21);
    let hp = HyperParams {
        alpha: 0.3,
        ..HyperParams::default()
    };
    let reg = regularizer("kl_reg", &hp);
    let nets = small_nets(&mut rng, CriticKind::ActionValues, 3, 2, 3);
    let w = random_window(&mut rng, &nets, 3, 2, 3);
    let targets = [0.3, -1.0, 2.0];
    let eval = |nets: &AgentNets| {
        let ctx = LossContext::new(nets, &hp, &*reg);
        let mut ga = vec![0.0; nets.policy.num_params()];
        let mut gq = vec![0.0; nets.critic.num_params()];
        let mut gd = vec![0.0; nets.default.num_params()];
        let a = actor_loss_q(&ctx, &w, &mut Rng::new(0), 1.0, &mut ga).unwrap();
        let q = q_loss(nets, &w, &targets, 1.0, &mut gq).unwrap();
        let d = default_policy_loss(&ctx, &w, 1.0, &mut gd).unwrap();
        (a, ga, q, gq, d, gd)
    };
    let base = eval(&nets);

    // Actor loss: online critic and online default are not inputs.
    let mut other = nets.clone();
    randomize(&mut other.critic, &mut rng, 1.0);
    randomize(&mut other.default, &mut rng, 1.0);
    let e = eval(&other);
    assert_eq!((e.0, &e.1), (base.0, &base.1));

    // Critic loss: neither policy is an input.
    let mut other = nets.clone();
    randomize(&mut other.policy, &mut rng, 1.0);
    randomize(&mut other.default, &mut rng, 1.0);
    randomize(&mut other.policy_target, &mut rng, 1.0);
    let e = eval(&other);
    assert_eq!((e.2, &e.3), (base.2, &base.3));

    // Distillation: critics and targets are not inputs.
    let mut other = nets.clone();
    randomize(&mut other.critic, &mut rng, 1.0);
    randomize(&mut other.critic_target, &mut rng, 1.0);
    randomize(&mut other.default_target, &mut rng, 1.0);
    randomize(&mut other.policy_target, &mut rng, 1.0);
    let e = eval(&other);
    assert_eq!((e.4, &e.5), (base.4, &base.5));
}

#[test]
fn actor_gradient_vanishes_for_constant_q_without_regularization() {
    let mut rng = Rng::new(3);
    let mut nets = small_nets(&mut rng, CriticKind::ActionValues, 3, 2, 4);
    let mut critic = asymkl::numerics::Mlp::zeros_uniform(&[3, 4], asymkl::numerics::Activation::Identity).unwrap();
    critic.layer_mut(0).1.fill(2.5);
    nets.critic_target = critic;
    let hp = HyperParams {
        alpha: 0.0,
        ..HyperParams::default()
    };
    let reg = regularizer("kl_reg", &hp);
    let ctx = LossContext::new(&nets, &hp, &*reg);
    let w = random_window(&mut rng, &nets, 3, 2, 4);
    let mut g = vec![0.0; nets.policy.num_params()];
    actor_loss_q(&ctx, &w, &mut rng, 1.0, &mut g).unwrap();
    assert!(g.iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn kl_to_uniform_default_matches_entropy_regularization() {
    let mut rng = Rng::new(12);
    let na = 5;
    let mut nets = small_nets(&mut rng, CriticKind::ActionValues, 4, 0, na);
    nets.default = vector_net(&[0.0; 5]);
    nets.default_target = nets.default.clone();
    let hp = HyperParams {
        alpha: 0.37,
        ..HyperParams::default()
    };
    let w = random_window(&mut rng, &nets, 4, 0, 6);
    let (l_kl, g_kl) = per_step_actor(&nets, &hp, "kl_reg", &w);
    let (l_ent, g_ent) = per_step_actor(&nets, &hp, "entropy_reg", &w);
    for (a, b) in l_kl.iter().zip(&l_ent) {
        assert!((a - b - hp.alpha * (na as f64).ln()).abs() < 1e-12);
    }
    for (a, b) in g_kl.iter().zip(&g_ent) {
        assert!((a - b).abs() < 1e-10);
    }

    // With Q ≡ 0 the KL gradient is the entropy-ascent direction.
    nets.critic_target = asymkl::numerics::Mlp::zeros_uniform(&[4, na], asymkl::numerics::Activation::Identity).unwrap();
    let (_, g_kl) = per_step_actor(&nets, &hp, "kl_reg", &w);
    let mut g_h = vec![0.0; nets.policy.num_params()];
    for s in &w.steps {
        let (raw, mut tape) = nets.policy.forward(&s.features).unwrap();
        let pi = nets.head.distribution(&raw).unwrap();
        let dist_grad: Vec<f64> = pi.entropy_grad().iter().map(|g| -hp.alpha * g).collect();
        nets.policy
            .backward_accumulate(&mut tape, &nets.head.backward(&raw, &dist_grad), &mut g_h, 1.0)
            .unwrap();
    }
    for (a, b) in g_kl.iter().zip(&g_h) {
        assert!((a - b).abs() < 1e-12);
    }
}

/// Adam on a loss over an input-free default net until the gradient vanishes.
fn distill_vector(policies: &[(f64, Vec<f64>)], name: &str) -> Vec<f64> {
    let na = policies[0].1.len();
    let hp = HyperParams::default();
    let reg = regularizer(name, &hp);
    let ns = policies.len();
    let rows: Vec<Vec<f64>> = policies.iter().map(|(_, p)| p.clone()).collect();
    let mut nets = tabular_nets(&rows, &vec![1.0 / na as f64; na], CriticKind::ActionValues);
    let windows: Vec<Window> = policies
        .iter()
        .enumerate()
        .map(|(s, (d, _))| {
            Window::new(vec![step(one_hot(s, ns), 0, 0.0)], one_hot(s, ns), vec![])
                .unwrap()
                .with_weight(*d)
        })
        .collect();
    let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.05, nets.default.num_params()).unwrap();
    for i in 0..20_000 {
        let mut g = vec![0.0; nets.default.num_params()];
        {
            let ctx = LossContext::new(&nets, &hp, &*reg);
            for w in &windows {
                default_policy_loss(&ctx, w, 1.0, &mut g).unwrap();
            }
        }
        if i > 100 && g.iter().all(|x| x.abs() < 1e-11) {
            break;
        }
        opt.step(nets.default.params_mut(), &g).unwrap();
    }
    nets.default_dist(&[], Which::Online).unwrap().as_categorical().unwrap().probs()
}

#[test]
fn single_state_distillation_recovers_the_policy() {
    let target = vec![0.6, 0.1, 0.3];
    let got = distill_vector(&[(1.0, target.clone())], "kl_reg");
    for (a, b) in got.iter().zip(&target) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn reversed_distillation_seeks_the_geometric_mean() {
    let policies = vec![(0.5, vec![0.96, 0.02, 0.02]), (0.5, vec![0.02, 0.49, 0.49])];
    let forward = distill_vector(&policies, "kl_reg");
    let reverse = distill_vector(&policies, "reversed_kl_reg");
    // Forward KL: visitation-weighted arithmetic mean.
    let mean: Vec<f64> = (0..3).map(|a| policies.iter().map(|(d, p)| d * p[a]).sum()).collect();
    // Reverse KL: normalized weighted geometric mean.
    let geo: Vec<f64> = (0..3).map(|a| policies.iter().map(|(d, p)| d * p[a].ln()).sum::<f64>().exp()).collect();
    let z: f64 = geo.iter().sum();
    for a in 0..3 {
        assert!((forward[a] - mean[a]).abs() < 1e-6, "{forward:?} vs {mean:?}");
        assert!((reverse[a] - geo[a] / z).abs() < 1e-6, "{reverse:?}");
    }
    let l1: f64 = forward.iter().zip(&reverse).map(|(a, b)| (a - b).abs()).sum();
    assert!(l1 > 0.1);
}

#[test]
fn old_policy_kl_is_zero_after_refresh() {
    let mut rng = Rng::new(2);
    let hp = HyperParams {
        old_policy_period: 1,
        alpha: 0.1,
        ..HyperParams::default()
    };
    let nets = small_nets(&mut rng, CriticKind::ActionValues, 3, 3, 3);
    let batch: Vec<Window> = (0..4).map(|_| random_window(&mut rng, &nets, 3, 3, 3)).collect();
    let mut learner = Learner::new(
        nets,
        hp.clone(),
        AlgorithmRegistry::default().build("retrace").unwrap(),
        regularizer("kl_to_old_policy", &hp),
        false,
        Rng::new(0),
    )
    .unwrap();
    for _ in 0..3 {
        learner.update(&batch).unwrap();
        assert!(learner.evaluate_stats(&batch).unwrap().mean_kl.abs() < 1e-15);
    }
}

#[test]
fn target_sync_periods() {
    let mut rng = Rng::new(6);
    let hp = HyperParams {
        target_period: 100,
        default_target_period: 50,
        ..HyperParams::default()
    };
    let mut nets = small_nets(&mut rng, CriticKind::ActionValues, 3, 2, 3);
    let before = nets.clone();
    randomize(&mut nets.policy, &mut rng, 1.0);
    randomize(&mut nets.critic, &mut rng, 1.0);
    randomize(&mut nets.default, &mut rng, 1.0);

    let mut n = nets.clone();
    sync_targets(&mut n, 50, &hp, Reference::Learned, false);
    assert_eq!(n.policy_target.params(), before.policy_target.params());
    assert_eq!(n.critic_target.params(), before.critic_target.params());
    assert_eq!(n.default_target.params(), nets.default.params());

    sync_targets(&mut n, 100, &hp, Reference::Learned, false);
    assert_eq!(n.policy_target.params(), nets.policy.params());
    assert_eq!(n.critic_target.params(), nets.critic.params());
}

#[test]
fn learner_update_moves_only_trained_nets() {
    let mut rng = Rng::new(13);
    let hp = HyperParams::default();
    let nets = small_nets(&mut rng, CriticKind::StateValue, 3, 2, 3);
    let batch: Vec<Window> = (0..3).map(|_| random_window(&mut rng, &nets, 3, 2, 4)).collect();
    for (name, frozen) in [("entropy_bonus", true), ("kl_reg", false)] {
        let mut learner = Learner::new(
            nets.clone(),
            hp.clone(),
            AlgorithmRegistry::default().build("vtrace").unwrap(),
            regularizer(name, &hp),
            false,
            Rng::new(0),
        )
        .unwrap();
        learner.update(&batch).unwrap();
        let after = learner.nets();
        assert_ne!(after.policy.params(), nets.policy.params());
        assert_ne!(after.critic.params(), nets.critic.params());
        assert_eq!(after.default.params() == nets.default.params(), frozen, "{name}");
    }
}
