use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Largest state space [`TabularMdp`] enumerations accept.
pub const MAX_TABULAR_STATES: usize = 100_000;

/// Finite MDP with sparse transition rows.
///
/// Terminal states are absorbing, reward-free and carry value 0.
/// `mask_map[s]` is the value of the default policy's input at `s`; states
/// sharing a value are indistinguishable to the default policy.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    /// Row `s * num_actions + a` lists `(s', P(s'|s,a))`.
    pub transitions: Vec<Vec<(usize, f64)>>,
    /// `r(s, a)` at index `s * num_actions + a`.
    pub rewards: Vec<f64>,
    pub initial: Vec<f64>,
    pub gamma: f64,
    pub terminal: Vec<bool>,
    pub mask_map: Vec<usize>,
}

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.num_states, self.num_actions);
        if s == 0 || a == 0 {
            return Err(Error::invalid("empty MDP"));
        }
        if self.transitions.len() != s * a || self.rewards.len() != s * a {
            return Err(Error::invalid("transition/reward tables have the wrong size"));
        }
        if self.initial.len() != s || self.terminal.len() != s || self.mask_map.len() != s {
            return Err(Error::invalid("per-state tables have the wrong size"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("discount {} outside [0, 1]", self.gamma)));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-12 || row.iter().any(|&(t, p)| t >= s || p < 0.0) {
                return Err(Error::invalid(format!(
                    "transition row (s={}, a={}) is not a distribution (sum {total})",
                    i / a,
                    i % a
                )));
            }
        }
        if (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("initial distribution does not sum to 1"));
        }
        Ok(())
    }

    #[inline]
    pub fn next(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.num_actions + a]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.next(s, a).iter().filter(|(t, _)| *t == s2).map(|(_, p)| p).sum()
    }

    pub fn num_mask_values(&self) -> usize {
        self.mask_map.iter().max().map_or(0, |m| m + 1)
    }

    pub fn sample_initial(&self, rng: &mut Rng) -> usize {
        rng.weighted(&self.initial)
    }

    pub fn sample_next(&self, s: usize, a: usize, rng: &mut Rng) -> usize {
        let row = self.next(s, a);
        let w: Vec<f64> = row.iter().map(|(_, p)| *p).collect();
        row[rng.weighted(&w)].0
    }

    /// Random dense MDP with no terminal states, identity mask map and
    /// rewards in `[-1, 1]`.
    pub fn random(num_states: usize, num_actions: usize, gamma: f64, rng: &mut Rng) -> Self {
        let mut transitions = Vec::with_capacity(num_states * num_actions);
        let mut rewards = Vec::with_capacity(num_states * num_actions);
        for _ in 0..num_states * num_actions {
            let w: Vec<f64> = (0..num_states).map(|_| rng.uniform().powi(2) + 1e-3).collect();
            let total: f64 = w.iter().sum();
            let mut row: Vec<(usize, f64)> = w.iter().enumerate().map(|(i, x)| (i, x / total)).collect();
            fix_row_sum(&mut row);
            transitions.push(row);
            rewards.push(2.0 * rng.uniform() - 1.0);
        }
        let w: Vec<f64> = (0..num_states).map(|_| rng.uniform() + 0.1).collect();
        let total: f64 = w.iter().sum();
        let initial = normalized_exact(w.iter().map(|x| x / total).collect());
        Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            initial,
            gamma,
            terminal: vec![false; num_states],
            mask_map: (0..num_states).collect(),
        }
    }

    /// Whether every non-terminal state reaches a terminal state with
    /// positive probability under `policy` (rows of `π(a|s)`).
    pub fn terminates_under(&self, policy: &[Vec<f64>]) -> bool {
        let mut reaches = self.terminal.clone();
        loop {
            let mut changed = false;
            for s in 0..self.num_states {
                if reaches[s] {
                    continue;
                }
                let ok = (0..self.num_actions).any(|a| {
                    policy[s][a] > 0.0 && self.next(s, a).iter().any(|&(t, p)| p > 0.0 && reaches[t])
                });
                if ok {
                    reaches[s] = true;
                    changed = true;
                }
            }
            if !changed {
                return reaches.iter().all(|r| *r);
            }
        }
    }
}

/// Pushes rounding error onto the largest entry so the row sums to 1 within 1e-12.
pub(crate) fn fix_row_sum(row: &mut [(usize, f64)]) {
    let total: f64 = row.iter().map(|(_, p)| p).sum();
    if let Some(big) = row
        .iter_mut()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite probabilities"))
    {
        big.1 += 1.0 - total;
    }
}

fn normalized_exact(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if let Some(i) = (0..v.len()).max_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite")) {
        v[i] += 1.0 - total;
    }
    v
}
