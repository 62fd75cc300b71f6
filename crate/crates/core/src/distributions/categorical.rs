use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Categorical distribution stored as logits. Probabilities come from a
/// max-shifted log-softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    logits: Vec<f64>,
    log_probs: Vec<f64>,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

impl Categorical {
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.len() < 2 {
            return Err(Error::invalid("a categorical needs at least two actions"));
        }
        if logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::Numeric("invalid logit".into()));
        }
        let log_probs = log_softmax(&logits);
        Ok(Self { logits, log_probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_logits(vec![0.0; n])
    }

    /// From probabilities; zero entries become `-inf` logits.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        Self::from_logits(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn num_actions(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    fn check_same(&self, other: &Categorical) -> Result<()> {
        if self.num_actions() != other.num_actions() {
            return Err(Error::invalid(format!(
                "categorical size mismatch: {} vs {}",
                self.num_actions(),
                other.num_actions()
            )));
        }
        Ok(())
    }

    /// `KL(self ‖ other)` with `0 · log 0 = 0`.
    pub fn kl(&self, other: &Categorical) -> Result<f64> {
        self.check_same(other)?;
        let mut kl = 0.0;
        for (lp, lq) in self.log_probs.iter().zip(&other.log_probs) {
            let p = lp.exp();
            if p > 0.0 {
                kl += p * (lp - lq);
            }
        }
        Ok(kl)
    }

    /// Gradients of `KL(self ‖ other)` with respect to the logits of `self`
    /// and of `other`.
    pub fn kl_grads(&self, other: &Categorical) -> Result<(Vec<f64>, Vec<f64>)> {
        let kl = self.kl(other)?;
        let p = self.probs();
        let q = other.probs();
        let gp = p
            .iter()
            .zip(self.log_probs.iter().zip(&other.log_probs))
            .map(|(&pi, (lp, lq))| if pi > 0.0 { pi * (lp - lq - kl) } else { 0.0 })
            .collect();
        let gq = q.iter().zip(&p).map(|(qi, pi)| qi - pi).collect();
        Ok((gp, gq))
    }

    pub fn entropy(&self) -> f64 {
        -self
            .log_probs
            .iter()
            .map(|lp| {
                let p = lp.exp();
                if p > 0.0 {
                    p * lp
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    }

    pub fn entropy_grad(&self) -> Vec<f64> {
        let h = self.entropy();
        self.log_probs
            .iter()
            .map(|lp| {
                let p = lp.exp();
                if p > 0.0 {
                    -p * (lp + h)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn log_prob(&self, action: usize) -> Result<f64> {
        self.log_probs
            .get(action)
            .copied()
            .ok_or_else(|| Error::invalid(format!("action {action} outside 0..{}", self.num_actions())))
    }

    pub fn log_prob_grad(&self, action: usize) -> Result<Vec<f64>> {
        self.log_prob(action)?;
        Ok(self
            .log_probs
            .iter()
            .enumerate()
            .map(|(j, lp)| f64::from(u8::from(j == action)) - lp.exp())
            .collect())
    }

    /// `E_p[values]`.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        crate::error::check_len("expectation values", values.len(), self.num_actions())?;
        Ok(self
            .log_probs
            .iter()
            .zip(values)
            .map(|(lp, v)| {
                let p = lp.exp();
                if p > 0.0 {
                    p * v
                } else {
                    0.0
                }
            })
            .sum())
    }

    /// Gradient of `E_p[values]` with respect to the logits (values held fixed).
    pub fn expectation_grad(&self, values: &[f64]) -> Result<Vec<f64>> {
        let mean = self.expectation(values)?;
        Ok(self
            .log_probs
            .iter()
            .zip(values)
            .map(|(lp, v)| {
                let p = lp.exp();
                if p > 0.0 {
                    p * (v - mean)
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        rng.weighted(&self.probs())
    }

    pub fn mode(&self) -> usize {
        self.log_probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }
}
