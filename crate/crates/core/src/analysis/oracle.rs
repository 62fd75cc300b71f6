use std::collections::BTreeMap;

use crate::envs::TabularMdp;
use crate::error::{check_len, Error, Result};

/// Occupancy cut-off: terms with `γ^t` below this are dropped.
pub const VISITATION_CUTOFF: f64 = 1e-10;
/// Largest history tree [`history_default_policy`] enumerates.
pub const MAX_HISTORY_HORIZON: usize = 6;

/// `d(s) = Σ_{t<T} γ^t Pr[s_t = s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Visitation {
    pub weights: Vec<f64>,
    /// Number of time steps summed.
    pub horizon: usize,
}

fn check_policy(mdp: &TabularMdp, policy: &[Vec<f64>]) -> Result<()> {
    check_len("policy rows", policy.len(), mdp.num_states)?;
    for (s, row) in policy.iter().enumerate() {
        check_len("policy row", row.len(), mdp.num_actions)?;
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-9 || row.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid(format!("policy row {s} is not a distribution")));
        }
    }
    Ok(())
}

fn propagate(mdp: &TabularMdp, policy: &[Vec<f64>], d: &[f64]) -> Vec<f64> {
    let mut next = vec![0.0; mdp.num_states];
    for (s, &mass) in d.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for (a, &pa) in policy[s].iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for &(t, p) in mdp.next(s, a) {
                next[t] += mass * pa * p;
            }
        }
    }
    next
}

/// Forward recursion `d_{t+1} = d_t·P^π`, summed with weights `γ^t`.
///
/// Without an explicit `horizon` the sum runs until `γ^t < 1e-10`, which
/// requires `γ < 1`. Terminal states are absorbing and keep their mass.
pub fn discounted_visitation(mdp: &TabularMdp, policy: &[Vec<f64>], gamma: f64, horizon: Option<usize>) -> Result<Visitation> {
    mdp.validate()?;
    check_policy(mdp, policy)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("discount {gamma} outside [0, 1]")));
    }
    if horizon.is_none() && gamma >= 1.0 {
        return Err(Error::invalid("undiscounted visitation needs an explicit horizon"));
    }
    let mut weights = vec![0.0; mdp.num_states];
    let mut d = mdp.initial.clone();
    let mut discount = 1.0;
    let mut t = 0;
    loop {
        if horizon.map_or(discount < VISITATION_CUTOFF, |h| t >= h) {
            break;
        }
        for (w, x) in weights.iter_mut().zip(&d) {
            *w += discount * x;
        }
        t += 1;
        discount *= gamma;
        if discount == 0.0 && horizon.is_none() {
            break;
        }
        d = propagate(mdp, policy, &d);
    }
    Ok(Visitation { weights, horizon: t })
}

/// Tabular default policy per mask value.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultPolicyOracle {
    /// `π0*(·|v)` for each mask value `v`.
    pub probs: Vec<Vec<f64>>,
    /// Total weight behind each mask value.
    pub mass: Vec<f64>,
    /// Mask values without any weight; their rows are uniform.
    pub unvisited: Vec<usize>,
}

/// Visitation-weighted average of `π` within each mask group, over
/// non-terminal states (terminal states emit no actions).
pub fn default_policy_from_weights(mdp: &TabularMdp, policy: &[Vec<f64>], weights: &[f64]) -> Result<DefaultPolicyOracle> {
    check_policy(mdp, policy)?;
    check_len("visitation weights", weights.len(), mdp.num_states)?;
    let groups = mdp.num_mask_values();
    let na = mdp.num_actions;
    let mut probs = vec![vec![0.0; na]; groups];
    let mut mass = vec![0.0; groups];
    for s in 0..mdp.num_states {
        if mdp.terminal[s] {
            continue;
        }
        let v = mdp.mask_map[s];
        mass[v] += weights[s];
        for (acc, p) in probs[v].iter_mut().zip(&policy[s]) {
            *acc += weights[s] * p;
        }
    }
    let mut unvisited = Vec::new();
    for v in 0..groups {
        if mass[v] > 0.0 {
            for p in &mut probs[v] {
                *p /= mass[v];
            }
        } else {
            log::warn!("mask value {v} has zero visitation; its default policy is set to uniform");
            unvisited.push(v);
            probs[v] = vec![1.0 / na as f64; na];
        }
    }
    Ok(DefaultPolicyOracle { probs, mass, unvisited })
}

/// Optimal default policy `π0*(a|v) = Σ_{m(s)=v} d(s)π(a|s) / Σ_{m(s)=v} d(s)`
/// with `d` the discounted visitation of `π`.
pub fn optimal_default_policy(mdp: &TabularMdp, policy: &[Vec<f64>], gamma: f64) -> Result<DefaultPolicyOracle> {
    let d = discounted_visitation(mdp, policy, gamma, None)?;
    default_policy_from_weights(mdp, policy, &d.weights)
}

/// History-indicator form on a finite tree: every history
/// `(s_0, a_0, …, s_t)` with `t < horizon` is enumerated, weighted by
/// `γ^t·Pr[history]`, and grouped by `key(states, actions)`.
pub fn history_default_policy<K, F>(
    mdp: &TabularMdp,
    policy: &[Vec<f64>],
    gamma: f64,
    horizon: usize,
    key: F,
) -> Result<BTreeMap<K, Vec<f64>>>
where
    K: Ord,
    F: Fn(&[usize], &[usize]) -> K,
{
    mdp.validate()?;
    check_policy(mdp, policy)?;
    if horizon == 0 || horizon > MAX_HISTORY_HORIZON {
        return Err(Error::invalid(format!(
            "history horizon must lie in 1..={MAX_HISTORY_HORIZON}, got {horizon}"
        )));
    }
    let na = mdp.num_actions;
    let mut acc: BTreeMap<K, (f64, Vec<f64>)> = BTreeMap::new();
    // Depth-first over (states, actions, probability).
    let mut stack: Vec<(Vec<usize>, Vec<usize>, f64)> = mdp
        .initial
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(s, p)| (vec![s], Vec::new(), *p))
        .collect();
    while let Some((states, actions, prob)) = stack.pop() {
        let t = actions.len();
        let s = *states.last().expect("non-empty history");
        if mdp.terminal[s] {
            continue;
        }
        let w = gamma.powi(t as i32) * prob;
        let entry = acc.entry(key(&states, &actions)).or_insert_with(|| (0.0, vec![0.0; na]));
        entry.0 += w;
        for (e, p) in entry.1.iter_mut().zip(&policy[s]) {
            *e += w * p;
        }
        if t + 1 >= horizon {
            continue;
        }
        for (a, &pa) in policy[s].iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for &(s2, p) in mdp.next(s, a) {
                if p == 0.0 {
                    continue;
                }
                let mut st = states.clone();
                st.push(s2);
                let mut ac = actions.clone();
                ac.push(a);
                stack.push((st, ac, prob * pa * p));
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(k, (mass, mut row))| {
            for r in &mut row {
                *r /= mass;
            }
            (k, row)
        })
        .collect())
}

/// Exact regularized values.
#[derive(Debug, Clone, PartialEq)]
pub struct DpValues {
    /// `Q(s, a)` at `s * num_actions + a`.
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub num_actions: usize,
    pub iterations: usize,
}

impl DpValues {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.num_actions + a]
    }
}

pub(crate) fn kl_row(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.ln() - qi.ln()))
        .sum()
}

pub(crate) fn entropy_row(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Policy evaluation with a per-state cost:
/// `V(s) = Σ_a π(a|s)Q(s,a) − c(s)`, `Q(s,a) = r(s,a) + γ·E[V(s')]`,
/// terminal states fixed at 0, iterated until the update falls below 1e-12.
pub fn evaluate_with_costs(mdp: &TabularMdp, policy: &[Vec<f64>], costs: &[f64]) -> Result<DpValues> {
    mdp.validate()?;
    check_policy(mdp, policy)?;
    check_len("state costs", costs.len(), mdp.num_states)?;
    if mdp.gamma >= 1.0 && !mdp.terminates_under(policy) {
        return Err(Error::invalid("undiscounted evaluation needs a policy that reaches a terminal state"));
    }
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut v = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    const MAX_ITERS: usize = 10_000_000;
    for it in 1..=MAX_ITERS {
        for s in 0..ns {
            for a in 0..na {
                let ev: f64 = mdp.next(s, a).iter().map(|&(t, p)| p * v[t]).sum();
                q[s * na + a] = mdp.reward(s, a) + mdp.gamma * ev;
            }
        }
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            let new = if mdp.terminal[s] {
                0.0
            } else {
                policy[s].iter().zip(&q[s * na..(s + 1) * na]).map(|(p, x)| p * x).sum::<f64>() - costs[s]
            };
            delta = delta.max((new - v[s]).abs());
            v[s] = new;
        }
        if !delta.is_finite() {
            return Err(Error::Numeric("policy evaluation diverged".into()));
        }
        if delta < 1e-12 {
            return Ok(DpValues { q, v, num_actions: na, iterations: it });
        }
    }
    Err(Error::Numeric("policy evaluation did not converge".into()))
}

/// Exact `Q^π`, `V^π` of the KL-regularized objective with default policy
/// `default[m(s)]` and weight `α`.
pub fn regularized_dp_eval(mdp: &TabularMdp, policy: &[Vec<f64>], default: &[Vec<f64>], alpha: f64) -> Result<DpValues> {
    check_policy(mdp, policy)?;
    if default.len() < mdp.num_mask_values() {
        return Err(Error::invalid("default policy has fewer rows than mask values"));
    }
    let costs: Vec<f64> = (0..mdp.num_states)
        .map(|s| {
            let d = &default[mdp.mask_map[s]];
            if policy[s].iter().zip(d).any(|(p, q)| *p > 0.0 && *q <= 0.0) {
                f64::INFINITY
            } else {
                alpha * kl_row(&policy[s], d)
            }
        })
        .collect();
    if costs.iter().any(|c| c.is_infinite()) {
        return Err(Error::invalid("policy puts mass where the default policy has none"));
    }
    evaluate_with_costs(mdp, policy, &costs)
}

/// Entropy-regularized values: costs `−α·H(π(·|s))`.
pub fn entropy_regularized_eval(mdp: &TabularMdp, policy: &[Vec<f64>], alpha: f64) -> Result<DpValues> {
    check_policy(mdp, policy)?;
    let costs: Vec<f64> = policy.iter().map(|row| -alpha * entropy_row(row)).collect();
    evaluate_with_costs(mdp, policy, &costs)
}
