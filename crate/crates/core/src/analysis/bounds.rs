use serde::Serialize;

use super::oracle::{entropy_row, kl_row};
use crate::error::{check_len, Error, Result};
use crate::numerics::Rng;

const ROW_TOLERANCE: f64 = 1e-12;

/// Latent factorization `π(a|s) = Σ_z π(a|z)·π(z|s)` with a prior `π0(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStack {
    /// `π(z|s)`, one row per state.
    pub z_given_s: Vec<Vec<f64>>,
    /// `π(a|z)`, one row per latent value.
    pub a_given_z: Vec<Vec<f64>>,
    pub prior: Vec<f64>,
}

/// Finite joint over states and actions: `p(s)·π(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    pub state_probs: Vec<f64>,
    /// `π(a|s)`, one row per state.
    pub policy: Vec<Vec<f64>>,
    pub latent: Option<LatentStack>,
}

fn check_distribution(name: &str, row: &[f64]) -> Result<()> {
    let total: f64 = row.iter().sum();
    if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::invalid(format!("{name} is not normalized (sum {total})")));
    }
    Ok(())
}

fn normalize(mut row: Vec<f64>) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    for p in &mut row {
        *p /= total;
    }
    row
}

/// Random point on the simplex; with `sparse`, some entries are exactly zero.
fn random_simplex(rng: &mut Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    if sparse && n > 1 {
        for _ in 0..rng.below(n) {
            let i = rng.below(n);
            w[i] = 0.0;
        }
        if w.iter().all(|x| *x == 0.0) {
            w[rng.below(n)] = 1.0;
        }
    }
    normalize(w)
}

impl DiscreteJoint {
    pub fn new(state_probs: Vec<f64>, policy: Vec<Vec<f64>>) -> Result<Self> {
        let joint = Self { state_probs, policy, latent: None };
        joint.validate()?;
        Ok(joint)
    }

    /// Builds `π(a|s)` from a latent stack.
    pub fn from_latent(state_probs: Vec<f64>, latent: LatentStack) -> Result<Self> {
        let na = latent.a_given_z.first().map_or(0, Vec::len);
        let policy = latent
            .z_given_s
            .iter()
            .map(|zs| {
                let mut row = vec![0.0; na];
                for (pz, az) in zs.iter().zip(&latent.a_given_z) {
                    for (r, pa) in row.iter_mut().zip(az) {
                        *r += pz * pa;
                    }
                }
                row
            })
            .collect();
        let joint = Self { state_probs, policy, latent: Some(latent) };
        joint.validate()?;
        Ok(joint)
    }

    pub fn num_actions(&self) -> usize {
        self.policy.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        check_distribution("p(s)", &self.state_probs)?;
        check_len("policy rows", self.policy.len(), self.state_probs.len())?;
        let na = self.num_actions();
        if na == 0 {
            return Err(Error::invalid("empty action set"));
        }
        for row in &self.policy {
            check_len("policy row", row.len(), na)?;
            check_distribution("π(a|s)", row)?;
        }
        if let Some(l) = &self.latent {
            check_len("π(z|s) rows", l.z_given_s.len(), self.state_probs.len())?;
            let nz = l.prior.len();
            check_distribution("π0(z)", &l.prior)?;
            check_len("π(a|z) rows", l.a_given_z.len(), nz)?;
            for row in &l.z_given_s {
                check_len("π(z|s) row", row.len(), nz)?;
                check_distribution("π(z|s)", row)?;
            }
            for row in &l.a_given_z {
                check_len("π(a|z) row", row.len(), na)?;
                check_distribution("π(a|z)", row)?;
            }
        }
        Ok(())
    }

    /// Random joint with `ns` states and `na` actions; about a third of the
    /// instances have zeros in their rows.
    pub fn random(rng: &mut Rng, ns: usize, na: usize) -> Self {
        let sparse = rng.below(3) == 0;
        let state_probs = random_simplex(rng, ns, sparse);
        let policy = (0..ns).map(|_| random_simplex(rng, na, sparse)).collect();
        Self { state_probs, policy, latent: None }
    }

    pub fn random_latent(rng: &mut Rng, ns: usize, nz: usize, na: usize) -> Self {
        let sparse = rng.below(3) == 0;
        let state_probs = random_simplex(rng, ns, sparse);
        let latent = LatentStack {
            z_given_s: (0..ns).map(|_| random_simplex(rng, nz, sparse)).collect(),
            a_given_z: (0..nz).map(|_| random_simplex(rng, na, sparse)).collect(),
            prior: random_simplex(rng, nz, false),
        };
        Self::from_latent(state_probs, latent).expect("generated rows are normalized")
    }

    /// `π(a) = Σ_s p(s)·π(a|s)`.
    pub fn action_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_actions()];
        for (ps, row) in self.state_probs.iter().zip(&self.policy) {
            for (mi, pa) in m.iter_mut().zip(row) {
                *mi += ps * pa;
            }
        }
        m
    }

    /// `MI[A;S] = Σ_{s,a} p(s)π(a|s)·ln(π(a|s)/π(a))`.
    pub fn mutual_information(&self) -> f64 {
        let marginal = self.action_marginal();
        self.state_probs
            .iter()
            .zip(&self.policy)
            .filter(|(ps, _)| **ps > 0.0)
            .map(|(ps, row)| ps * kl_row(row, &marginal))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub mi: f64,
    /// `E_{p(s)}[KL(π(·|s) ‖ π0)]`.
    pub bound: f64,
    /// `KL(π(a) ‖ π0)`, which the gap `bound − mi` should equal.
    pub marginal_kl: f64,
}

impl BoundCheck {
    pub fn gap(&self) -> f64 {
        self.bound - self.mi
    }

    pub fn holds(&self, tolerance: f64) -> bool {
        self.gap() >= -tolerance && (self.gap() - self.marginal_kl).abs() <= tolerance
    }
}

/// Variational upper bound on `MI[A;S]` with the state-independent `π0(a)`.
pub fn mi_bound_check(joint: &DiscreteJoint, prior: &[f64]) -> Result<BoundCheck> {
    joint.validate()?;
    check_len("π0(a)", prior.len(), joint.num_actions())?;
    check_distribution("π0(a)", prior)?;
    let bound = joint
        .state_probs
        .iter()
        .zip(&joint.policy)
        .map(|(ps, row)| if *ps > 0.0 { ps * kl_row(row, prior) } else { 0.0 })
        .sum();
    Ok(BoundCheck {
        mi: joint.mutual_information(),
        bound,
        marginal_kl: kl_row(&joint.action_marginal(), prior),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatentBoundCheck {
    pub mi: f64,
    /// `MI[Z;S]`, which sits between `mi` and the bound.
    pub latent_mi: f64,
    /// `E_{p(s)}[KL(π(Z|s) ‖ π0(Z))]`.
    pub latent_bound: f64,
}

impl LatentBoundCheck {
    pub fn gap(&self) -> f64 {
        self.latent_bound - self.mi
    }

    pub fn holds(&self, tolerance: f64) -> bool {
        self.mi <= self.latent_mi + tolerance && self.latent_mi <= self.latent_bound + tolerance
    }
}

/// Bound on `MI[A;S]` through the latent channel `S → Z → A`.
pub fn latent_mi_bound_check(joint: &DiscreteJoint) -> Result<LatentBoundCheck> {
    joint.validate()?;
    let latent = joint
        .latent
        .as_ref()
        .ok_or_else(|| Error::invalid("joint has no latent stack"))?;
    let mut z_marginal = vec![0.0; latent.prior.len()];
    for (ps, row) in joint.state_probs.iter().zip(&latent.z_given_s) {
        for (m, pz) in z_marginal.iter_mut().zip(row) {
            *m += ps * pz;
        }
    }
    let weighted = |reference: &[f64]| -> f64 {
        joint
            .state_probs
            .iter()
            .zip(&latent.z_given_s)
            .map(|(ps, row)| if *ps > 0.0 { ps * kl_row(row, reference) } else { 0.0 })
            .sum()
    };
    Ok(LatentBoundCheck {
        mi: joint.mutual_information(),
        latent_mi: weighted(&z_marginal),
        latent_bound: weighted(&latent.prior),
    })
}

/// Entropy of the action marginal, `H(π(a))`.
pub fn marginal_entropy(joint: &DiscreteJoint) -> f64 {
    entropy_row(&joint.action_marginal())
}
