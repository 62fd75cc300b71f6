use std::fmt;

use serde::Serialize;

use super::bounds::{latent_mi_bound_check, mi_bound_check, DiscreteJoint};
use super::oracle::{
    discounted_visitation, entropy_regularized_eval, history_default_policy, optimal_default_policy,
    regularized_dp_eval,
};
use crate::envs::TabularMdp;
use crate::error::Result;
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Named pass/fail results, printable one per line.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    pub lines: Vec<CheckLine>,
}

impl VerificationReport {
    pub fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.lines.push(CheckLine {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.lines.extend(other.lines);
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail)?;
        }
        Ok(())
    }
}

/// Largest deviation over a set of instances, with the instance it came from.
#[derive(Debug, Clone, Copy, Default)]
struct Worst {
    value: f64,
    instance: usize,
}

impl Worst {
    fn update(&mut self, value: f64, instance: usize) {
        if !(value <= self.value) {
            *self = Worst { value, instance };
        }
    }
}

/// MI bounds on `instances` random joints and as many latent stacks.
pub fn bounds_suite(instances: usize, seed: u64) -> Result<VerificationReport> {
    const TOL: f64 = 1e-9;
    let base = Rng::new(seed);
    let mut min_gap = f64::INFINITY;
    let mut identity = Worst::default();
    let mut exact_prior = Worst::default();
    let mut latent_min_gap = f64::INFINITY;
    let mut latent_chain_ok = true;
    for i in 0..instances {
        let mut rng = base.fork(i as u64);
        let (ns, na) = (1 + rng.below(8), 2 + rng.below(7));
        let joint = DiscreteJoint::random(&mut rng, ns, na);
        let prior: Vec<f64> = {
            let w: Vec<f64> = (0..na).map(|_| rng.uniform() + 0.05).collect();
            let t: f64 = w.iter().sum();
            w.iter().map(|x| x / t).collect()
        };
        let check = mi_bound_check(&joint, &prior)?;
        min_gap = min_gap.min(check.gap());
        identity.update((check.gap() - check.marginal_kl).abs(), i);
        let marginal = joint.action_marginal();
        if marginal.iter().all(|p| *p > 0.0) {
            let tight = mi_bound_check(&joint, &marginal)?;
            exact_prior.update(tight.gap().abs(), i);
        }

        let nz = 1 + rng.below(6);
        let stack = DiscreteJoint::random_latent(&mut rng, ns, nz, na);
        let lc = latent_mi_bound_check(&stack)?;
        latent_min_gap = latent_min_gap.min(lc.gap());
        latent_chain_ok &= lc.holds(TOL);
    }
    let mut r = VerificationReport::default();
    r.push(
        "mi_bound",
        min_gap >= -TOL,
        format!("{instances} joints, min(bound - mi) = {min_gap:.3e}"),
    );
    r.push(
        "mi_gap_identity",
        identity.value <= TOL,
        format!(
            "max |bound - mi - KL(marginal || prior)| = {:.3e} (instance {})",
            identity.value, identity.instance
        ),
    );
    r.push(
        "mi_bound_tight_at_marginal",
        exact_prior.value <= TOL,
        format!("max |bound - mi| with the exact marginal as prior = {:.3e}", exact_prior.value),
    );
    r.push(
        "latent_mi_bound",
        latent_min_gap >= -TOL && latent_chain_ok,
        format!("{instances} latent stacks, min(latent_bound - mi) = {latent_min_gap:.3e}"),
    );
    Ok(r)
}

fn random_policy(rng: &mut Rng, ns: usize, na: usize) -> Vec<Vec<f64>> {
    (0..ns)
        .map(|_| {
            let w: Vec<f64> = (0..na).map(|_| rng.uniform() + 0.02).collect();
            let t: f64 = w.iter().sum();
            w.iter().map(|x| x / t).collect()
        })
        .collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Tabular oracle self-consistency on random MDPs: visitation mass, the
/// Markov form against history enumeration, and the uniform-reference
/// evaluation against entropy-regularized evaluation.
pub fn oracle_suite(instances: usize, seed: u64) -> Result<VerificationReport> {
    let base = Rng::new(seed);
    let mut mass = Worst::default();
    let mut history = Worst::default();
    let mut singleton = Worst::default();
    let mut constant = Worst::default();
    for i in 0..instances {
        let mut rng = base.fork(i as u64);
        let (ns, na) = (2 + rng.below(7), 2 + rng.below(3));
        let gamma = 0.3 + 0.65 * rng.uniform();
        let mut mdp = TabularMdp::random(ns, na, gamma, &mut rng);
        let policy = random_policy(&mut rng, ns, na);

        let d = discounted_visitation(&mdp, &policy, gamma, None)?;
        let expected = (1.0 - gamma.powi(d.horizon as i32)) / (1.0 - gamma);
        mass.update((d.weights.iter().sum::<f64>() - expected).abs(), i);

        let identity = optimal_default_policy(&mdp, &policy, gamma)?;
        for (row, pi) in identity.probs.iter().zip(&policy) {
            singleton.update(l1(row, pi), i);
        }

        let groups = 1 + rng.below(ns);
        mdp.mask_map = (0..ns).map(|s| if s < groups { s } else { rng.below(groups) }).collect();
        let horizon = 4;
        let tree = history_default_policy(&mdp, &policy, gamma, horizon, |states, _| mdp.mask_map[*states.last().unwrap()])?;
        let truncated = discounted_visitation(&mdp, &policy, gamma, Some(horizon))?;
        let markov = super::oracle::default_policy_from_weights(&mdp, &policy, &truncated.weights)?;
        for (v, row) in &tree {
            history.update(l1(row, &markov.probs[*v]), i);
        }

        let alpha = 0.1 + rng.uniform();
        let uniform = vec![vec![1.0 / na as f64; na]; mdp.num_mask_values()];
        let kl = regularized_dp_eval(&mdp, &policy, &uniform, alpha)?;
        let ent = entropy_regularized_eval(&mdp, &policy, alpha)?;
        let shift = alpha * (na as f64).ln() / (1.0 - gamma);
        for (a, b) in kl.v.iter().zip(&ent.v) {
            constant.update((b - a - shift).abs(), i);
        }
    }
    let mut r = VerificationReport::default();
    r.push(
        "visitation_mass",
        mass.value <= 1e-9,
        format!("max |sum d - sum gamma^t| = {:.3e}", mass.value),
    );
    r.push(
        "default_policy_full_information",
        singleton.value <= 1e-12,
        format!("max L1(pi0*, pi) with singleton groups = {:.3e}", singleton.value),
    );
    r.push(
        "default_policy_history_form",
        history.value <= 1e-9,
        format!("max L1 between history enumeration and occupancy form = {:.3e}", history.value),
    );
    r.push(
        "uniform_reference_constant",
        constant.value <= 1e-8,
        format!("max |V_ent - V_kl - alpha ln|A|/(1-gamma)| = {:.3e}", constant.value),
    );
    Ok(r)
}
