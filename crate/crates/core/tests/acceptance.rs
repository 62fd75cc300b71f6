//! End-to-end acceptance criteria, one PASS/FAIL line each.
//!
//! The training criteria (6 to 9) take several minutes in total.

mod common;

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use asymkl::algorithms::{
    default_policy_loss, gradcheck, AgentNets, CriticKind, HyperParams, LossContext, RegularizerRegistry, Step, Which,
    Window,
};
use asymkl::analysis::{bounds_suite, default_marginals, optimal_default_policy, regularized_dp_eval};
use asymkl::distributions::{Action, PolicyHead};
use asymkl::envs::{FactoredActionConfig, TabularMdp};
use asymkl::numerics::{Activation, Mlp, OptimizerKind, OptimizerState, Rng};
use asymkl::observation::one_hot;
use asymkl::runtime::{median, run_learner, ExperimentConfig, RunOutput};
use common::*;

const SEEDS: u64 = 5;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }

    fn within(self, elapsed: Duration, budget: Duration) -> Self {
        let fits = elapsed <= budget;
        Self {
            passed: self.passed && fits,
            detail: format!("{} [{:.1}s of {:.0}s budget]", self.detail, elapsed.as_secs_f64(), budget.as_secs_f64()),
        }
    }
}

/// Writes straight to the process stdout so the lines survive test output capture.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn gradient_suite() -> Outcome {
    let (report, elapsed) = timed(|| gradcheck::run_suite(200, 2024).unwrap());
    Outcome::new(
        report.passed(1e-4),
        format!("{} checks over 200 instances, max relative error {:.2e}", report.cases.len(), report.max_error()),
    )
    .within(elapsed, minutes(1))
}

/// Gradient descent on the occupancy-weighted distillation loss with a
/// tabular default net over mask groups.
fn distill_tabular(mdp: &TabularMdp, pi: &[Vec<f64>], d: &[f64]) -> Vec<Vec<f64>> {
    let (ns, na, nm) = (mdp.num_states, mdp.num_actions, mdp.num_mask_values());
    let hp = HyperParams::default();
    let reg = RegularizerRegistry::default().build("kl_reg", &hp).unwrap();
    let mut nets = AgentNets::from_parts(
        table_net(&log_rows(pi)),
        table_net(&vec![vec![0.0; na]; nm]),
        Mlp::zeros_uniform(&[ns, na], Activation::Identity).unwrap(),
        PolicyHead::Categorical { actions: na },
        CriticKind::ActionValues,
    )
    .unwrap();
    let windows: Vec<Window> = (0..ns)
        .filter(|&s| !mdp.terminal[s] && d[s] > 0.0)
        .map(|s| {
            let step = Step {
                features: one_hot(s, ns),
                default_features: one_hot(mdp.mask_map[s], nm),
                action: Action::Discrete(0),
                reward: 0.0,
                behavior_log_prob: 0.0,
                terminal: false,
            };
            Window::new(vec![step], one_hot(s, ns), one_hot(mdp.mask_map[s], nm))
                .unwrap()
                .with_weight(d[s])
        })
        .collect();
    let total: f64 = windows.iter().map(|w| w.weight).sum();
    let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.05, nets.default.num_params()).unwrap();
    for _ in 0..20_000 {
        let mut g = vec![0.0; nets.default.num_params()];
        {
            let ctx = LossContext::new(&nets, &hp, &*reg);
            for w in &windows {
                default_policy_loss(&ctx, w, 1.0 / total, &mut g).unwrap();
            }
        }
        if g.iter().all(|x| x.abs() < 1e-10) {
            break;
        }
        opt.step(nets.default.params_mut(), &g).unwrap();
    }
    (0..nm)
        .map(|m| {
            nets.default_dist(&one_hot(m, nm), Which::Online)
                .unwrap()
                .as_categorical()
                .unwrap()
                .probs()
        })
        .collect()
}

fn distillation_oracle() -> Outcome {
    let ((worst, groups), elapsed) = timed(|| {
        let mut rng = Rng::new(77);
        let mut worst = 0.0f64;
        let mut groups = 0;
        for _ in 0..20 {
            let ns = 2 + rng.below(9);
            let na = 2 + rng.below(3);
            let gamma = 0.5 + 0.45 * rng.uniform();
            let nm = 1 + rng.below(ns);
            let mut mdp = TabularMdp::random(ns, na, gamma, &mut rng);
            mdp.mask_map = (0..ns).map(|s| if s < nm { s } else { rng.below(nm) }).collect();
            let pi = random_policy(&mut rng, ns, na, 0.05);
            let oracle = optimal_default_policy(&mdp, &pi, gamma).unwrap();
            let d = asymkl::analysis::discounted_visitation(&mdp, &pi, gamma, None).unwrap();
            let learned = distill_tabular(&mdp, &pi, &d.weights);
            for (a, b) in oracle.probs.iter().zip(&learned) {
                worst = worst.max(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum());
                groups += 1;
            }
        }
        (worst, groups)
    });
    Outcome::new(worst <= 1e-2, format!("20 MDPs, {groups} mask groups, worst L1 {worst:.2e}")).within(elapsed, minutes(1))
}

fn entropy_identity() -> Outcome {
    let ((loss_gap, grad_gap), elapsed) = timed(|| {
        let mut rng = Rng::new(5);
        let (na, alpha) = (6, 0.45);
        let hp = HyperParams {
            alpha,
            ..HyperParams::default()
        };
        let mut loss_gap = 0.0f64;
        let mut grad_gap = 0.0f64;
        for _ in 0..10 {
            let mut nets = AgentNets::new(
                4,
                0,
                PolicyHead::Categorical { actions: na },
                CriticKind::ActionValues,
                &Default::default(),
                &mut rng,
            )
            .unwrap();
            for net in [&mut nets.policy, &mut nets.critic] {
                randomize(net, &mut rng, 0.8);
            }
            nets.policy_target = nets.policy.clone();
            nets.critic_target = nets.critic.clone();
            nets.default = vector_net(&vec![0.3; na]);
            nets.default_target = nets.default.clone();
            let w = random_window(&mut rng, &nets, 4, 0, 8);
            let (l_kl, g_kl) = per_step_actor(&nets, &hp, "kl_reg", &w);
            let (l_ent, g_ent) = per_step_actor(&nets, &hp, "entropy_reg", &w);
            for (a, b) in l_kl.iter().zip(&l_ent) {
                loss_gap = loss_gap.max((a - b - alpha * (na as f64).ln()).abs());
            }
            for (a, b) in g_kl.iter().zip(&g_ent) {
                grad_gap = grad_gap.max((a - b).abs());
            }
        }
        (loss_gap, grad_gap)
    });
    Outcome::new(
        grad_gap <= 1e-10 && loss_gap <= 1e-10,
        format!("max gradient gap {grad_gap:.1e}, max loss offset error {loss_gap:.1e}"),
    )
    .within(elapsed, Duration::from_secs(1))
}

fn information_bounds() -> Outcome {
    let (report, elapsed) = timed(|| bounds_suite(1000, 9).unwrap());
    let detail: Vec<String> = report
        .lines
        .iter()
        .map(|l| format!("{} {}", l.name, if l.passed { "ok" } else { "failed" }))
        .collect();
    Outcome::new(report.passed(), detail.join("; ")).within(elapsed, Duration::from_secs(30))
}

fn off_policy_fitting() -> Outcome {
    let ((worst_q, worst_v), elapsed) = timed(|| {
        let mut worst_q = 0.0f64;
        let mut worst_v = 0.0f64;
        for seed in 0..4 {
            let mut rng = Rng::new(500 + seed);
            let ns = 3 + (seed as usize % 2);
            let na = 2;
            let gamma = 0.85;
            let mut mdp = TabularMdp::random(ns, na, gamma, &mut rng);
            mdp.mask_map = vec![0; ns];
            mdp.terminal[ns - 1] = true;
            let pi = random_policy(&mut rng, ns, na, 0.2);
            let mu = random_policy(&mut rng, ns, na, 0.2);
            let pi0 = random_dist(&mut rng, na, 0.2);
            let hp = HyperParams {
                alpha: 0.3,
                gamma,
                rho_bar: 1e3,
                ..HyperParams::default()
            };
            let dp = regularized_dp_eval(&mdp, &pi, &[pi0.clone()], hp.alpha).unwrap();
            let reg = RegularizerRegistry::default().build("kl_reg", &hp).unwrap();
            let mut start = vec![1.0 / (ns - 1) as f64; ns];
            start[ns - 1] = 0.0;
            let windows = enumerate_windows(&mdp, &mu, &start, 2);
            let mut nets = tabular_nets(&pi, &pi0, CriticKind::ActionValues);
            let (q, _) = fit_critic(&mut nets, &hp, &*reg, &windows, Operator::Retrace, 50_000);
            let mut nets = tabular_nets(&pi, &pi0, CriticKind::StateValue);
            let (v, _) = fit_critic(&mut nets, &hp, &*reg, &windows, Operator::VTrace, 50_000);
            for s in 0..ns - 1 {
                for a in 0..na {
                    worst_q = worst_q.max((q[s][a] - dp.q(s, a)).abs());
                }
                worst_v = worst_v.max((v[s][0] - dp.v[s]).abs());
            }
        }
        (worst_q, worst_v)
    });
    Outcome::new(
        worst_q <= 1e-3 && worst_v <= 1e-3,
        format!("4 MDPs, Retrace max |Q − Q^π| {worst_q:.1e}, V-trace max |V − V^π| {worst_v:.1e}"),
    )
    .within(elapsed, minutes(2))
}

const GRIDNAV: &str = r#"
learner_steps = 8000
eval_period = 250
eval_episodes = 40
stop_at_return = 40.0
actors = 16
env_steps_per_update = 128
min_replay = 500
algorithm = "vtrace"

[env]
kind = "gridnav"
targets = 3
size = 12
last_action = true

[hp]
alpha = 0.3
gamma = 0.98
unroll = 8
batch_size = 16
lr_policy = 1e-3
lr_critic = 1e-3
lr_default = 1e-3
entropy_bonus = 1e-4
target_period = 100
default_target_period = 100

[architecture]
policy_hidden = [64]
critic_hidden = [64]
default_hidden = [64]
"#;

/// `GRIDNAV` with top-level keys prepended and tables patched by `edit`.
fn gridnav(head: &str, seed: u64, edit: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(&format!("seed = {seed}\n{head}\n{GRIDNAV}")).unwrap();
    edit(&mut cfg);
    cfg
}

/// Learner step at which the run first hit a median return of 40, or `None`.
fn time_to_threshold(out: &RunOutput) -> Option<u64> {
    out.steps_to_return(40.0)
}

fn fmt_steps(ts: &[Option<u64>]) -> String {
    let v: Vec<String> = ts.iter().map(|t| t.map_or("-".into(), |t| t.to_string())).collect();
    v.join(",")
}

/// Median with unreached runs counted as infinitely slow.
fn median_steps(ts: &[Option<u64>]) -> Option<u64> {
    let mut v: Vec<u64> = ts.iter().map(|t| t.unwrap_or(u64::MAX)).collect();
    v.sort_unstable();
    let m = v[v.len() / 2];
    (m != u64::MAX).then_some(m)
}

fn condition(head: &str, edit: impl Fn(&mut ExperimentConfig)) -> Vec<Option<u64>> {
    (0..SEEDS)
        .map(|seed| time_to_threshold(&run_learner(&gridnav(head, seed, &edit)).unwrap()))
        .collect()
}

fn speedup(base: Option<u64>, other: Option<u64>) -> Option<f64> {
    Some(1.0 - other? as f64 / base? as f64)
}

fn sparse_reward_speedups() -> (Outcome, Outcome) {
    let ((base, asym, full), elapsed) = timed(|| {
        let base = condition(r#"regularizer = "entropy_bonus""#, |_| {});
        let asym = condition(r#"regularizer = "kl_reg""#, |c| c.mask = masks(&["proprio", "targets"]));
        let full = condition("regularizer = \"kl_reg\"\nmask = \"full_information\"", |_| {});
        (base, asym, full)
    });
    let (mb, ma, mf) = (median_steps(&base), median_steps(&asym), median_steps(&full));
    let sa = speedup(mb, ma);
    let sf = speedup(mb, mf);
    let summary = format!(
        "median steps to 40: baseline {mb:?} [{}], asymmetric {ma:?} [{}], full information {mf:?} [{}]",
        fmt_steps(&base),
        fmt_steps(&asym),
        fmt_steps(&full)
    );
    let c6 = Outcome::new(
        sa.is_some_and(|s| s >= 0.2),
        format!("{summary}; asymmetric speed-up {:.0}%", 100.0 * sa.unwrap_or(f64::NAN)),
    )
    .within(elapsed, minutes(15));
    let c7 = Outcome::new(
        match (sa, sf) {
            (Some(a), Some(f)) => f < a,
            (Some(_), None) => true,
            _ => false,
        },
        format!(
            "full-information speed-up {:.0}% vs asymmetric {:.0}%",
            100.0 * sf.unwrap_or(f64::NAN),
            100.0 * sa.unwrap_or(f64::NAN)
        ),
    )
    .within(elapsed, minutes(15));
    (c6, c7)
}

fn masks(groups: &[&str]) -> asymkl::observation::MaskSpec {
    asymkl::observation::MaskSpec::task_subset(groups)
}

fn pretrain_default(seed: u64, dir: &Path) -> std::path::PathBuf {
    let cfg = gridnav(r#"regularizer = "kl_reg""#, seed, |c| {
        c.name = format!("pretrain{seed}");
        c.log_dir = Some(dir.to_path_buf());
        c.learner_steps = 3000;
        c.stop_at_return = None;
        c.eval_period = 1000;
        c.eval_episodes = 10;
        c.mask = masks(&["proprio", "last_action"]);
        c.env.params.insert("targets".into(), toml::Value::Integer(1));
    });
    run_learner(&cfg).unwrap();
    dir.join(&cfg.name).join("checkpoints").join("final").join("default.ckpt")
}

fn transfer() -> Outcome {
    let ((transfer, joint), elapsed) = timed(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut transfer = Vec::new();
        let mut joint = Vec::new();
        for seed in 0..SEEDS {
            let ckpt = pretrain_default(seed, dir.path());
            let mask = |c: &mut ExperimentConfig| c.mask = masks(&["proprio", "last_action"]);
            let cfg = gridnav(r#"regularizer = "kl_reg""#, seed, |c| {
                mask(c);
                c.pretrained = Some(asymkl::runtime::PretrainedDefault {
                    path: ckpt.clone(),
                    freeze: true,
                });
            });
            transfer.push(time_to_threshold(&asymkl::runtime::transfer_run(&cfg).unwrap()));
            joint.push(time_to_threshold(&run_learner(&gridnav(r#"regularizer = "kl_reg""#, seed, mask)).unwrap()));
        }
        (transfer, joint)
    });
    let (mt, mj) = (median_steps(&transfer), median_steps(&joint));
    let passed = match (mt, mj) {
        (Some(t), Some(j)) => t < j,
        (Some(_), None) => true,
        _ => false,
    };
    Outcome::new(
        passed,
        format!(
            "median steps to 40: frozen pretrained default {mt:?} [{}], joint from scratch {mj:?} [{}]",
            fmt_steps(&transfer),
            fmt_steps(&joint)
        ),
    )
    .within(elapsed, minutes(15))
}

const MAZE: &str = r#"
learner_steps = 6000
eval_period = 1000
eval_episodes = 10
actors = 8
env_steps_per_update = 32
min_replay = 500
algorithm = "vtrace"
regularizer = "kl_reg"
mask = "nothing"

[env]
kind = "factored_maze"
size = 9

[hp]
alpha = 0.01
gamma = 0.98
unroll = 10
batch_size = 16
lr_policy = 1e-3
lr_critic = 1e-3
lr_default = 1e-3

[architecture]
policy_hidden = [64]
critic_hidden = [64]
default_hidden = []
"#;

fn action_space_discovery() -> Outcome {
    let (rows, elapsed) = timed(|| {
        (0..SEEDS)
            .map(|seed| {
                let cfg = ExperimentConfig::from_toml(&format!("seed = {seed}\n{MAZE}")).unwrap();
                let out = run_learner(&cfg).unwrap();
                let probs = out.nets.default_dist(&[], Which::Online).unwrap().as_categorical().unwrap().probs();
                let m = default_marginals(&probs, &FactoredActionConfig::default()).unwrap();
                (m.entropy, m.prob("move", "forward").unwrap(), m.prob("move", "backward").unwrap())
            })
            .collect::<Vec<_>>()
    });
    let limit = 0.7 * (FactoredActionConfig::default().num_actions() as f64).ln();
    let entropies: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let margins: Vec<f64> = rows.iter().map(|r| r.1 - r.2).collect();
    let h = median(&entropies);
    let margin = median(&margins);
    let per_seed: Vec<String> = rows
        .iter()
        .map(|(h, f, b)| format!("H {h:.2} fwd {f:.2} back {b:.2}"))
        .collect();
    Outcome::new(
        h <= limit && margin > 0.0,
        format!(
            "median default entropy {h:.3} (limit {limit:.3}), median forward − backward {margin:+.3} \
             (reference forward 0.70, backward 0.10); {}",
            per_seed.join(" | ")
        ),
    )
    .within(elapsed, minutes(20))
}

fn determinism() -> Outcome {
    let (same, elapsed) = timed(|| {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let logs: Vec<Vec<u8>> = dirs
            .iter()
            .map(|dir| {
                let cfg = gridnav(r#"regularizer = "kl_reg""#, 3, |c| {
                    c.learner_steps = 600;
                    c.eval_period = 200;
                    c.eval_episodes = 5;
                    c.stop_at_return = None;
                    c.log_dir = Some(dir.path().to_path_buf());
                });
                run_learner(&cfg).unwrap();
                std::fs::read(dir.path().join(&cfg.name).join("progress.csv")).unwrap()
            })
            .collect();
        let rows = String::from_utf8_lossy(&logs[0]).lines().count();
        (logs[0] == logs[1], rows)
    });
    let (identical, rows) = same;
    Outcome::new(identical && rows > 1, format!("two seeded runs, {rows} CSV lines, identical: {identical}"))
        .within(elapsed, minutes(5))
}

fn record(results: &mut Vec<(u32, &'static str, bool)>, n: u32, name: &'static str, o: Outcome) {
    emit(&format!("{} criterion {n} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail));
    results.push((n, name, o.passed));
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    record(&mut results, 1, "gradient suite", gradient_suite());
    record(&mut results, 2, "distillation oracle", distillation_oracle());
    record(&mut results, 3, "entropy identity", entropy_identity());
    record(&mut results, 4, "information bounds", information_bounds());
    record(&mut results, 5, "off-policy fitting", off_policy_fitting());
    let (c6, c7) = sparse_reward_speedups();
    record(&mut results, 6, "sparse-reward speed-up", c6);
    record(&mut results, 7, "full-information control", c7);
    record(&mut results, 8, "default transfer", transfer());
    record(&mut results, 9, "action-space discovery", action_space_discovery());
    record(&mut results, 10, "determinism", determinism());
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.2)
        .map(|r| format!("{} ({})", r.0, r.1))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
