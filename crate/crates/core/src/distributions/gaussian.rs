use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numerics::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower bound of every squashed standard deviation.
pub const SIGMA_MIN: f64 = 0.1;

/// Diagonal Gaussian over a continuous action vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        check_len("gaussian std", std.len(), mean.len())?;
        if mean.is_empty() {
            return Err(Error::invalid("gaussian needs at least one dimension"));
        }
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric("gaussian parameters must be finite with positive std".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    fn check_same(&self, other: &DiagGaussian) -> Result<()> {
        check_len("gaussian dimension", other.dim(), self.dim())
    }

    pub fn kl(&self, other: &DiagGaussian) -> Result<f64> {
        self.check_same(other)?;
        Ok((0..self.dim())
            .map(|i| {
                let (mp, sp, mq, sq) = (self.mean[i], self.std[i], other.mean[i], other.std[i]);
                let d = mp - mq;
                (sq / sp).ln() + (sp * sp + d * d) / (2.0 * sq * sq) - 0.5
            })
            .sum())
    }

    /// Gradients of `KL(self ‖ other)`, each laid out as `[d/dmean.., d/dstd..]`.
    pub fn kl_grads(&self, other: &DiagGaussian) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_same(other)?;
        let n = self.dim();
        let mut gp = vec![0.0; 2 * n];
        let mut gq = vec![0.0; 2 * n];
        for i in 0..n {
            let (mp, sp, mq, sq) = (self.mean[i], self.std[i], other.mean[i], other.std[i]);
            let d = mp - mq;
            let sq2 = sq * sq;
            gp[i] = d / sq2;
            gq[i] = -d / sq2;
            gp[n + i] = -1.0 / sp + sp / sq2;
            gq[n + i] = 1.0 / sq - (sp * sp + d * d) / (sq2 * sq);
        }
        Ok((gp, gq))
    }

    pub fn entropy(&self) -> f64 {
        self.std.iter().map(|s| 0.5 * (1.0 + LN_2PI) + s.ln()).sum()
    }

    pub fn entropy_grad(&self) -> Vec<f64> {
        let n = self.dim();
        let mut g = vec![0.0; 2 * n];
        for i in 0..n {
            g[n + i] = 1.0 / self.std[i];
        }
        g
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        check_len("gaussian action", action.len(), self.dim())?;
        Ok(action
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(a, (m, s))| {
                let z = (a - m) / s;
                -0.5 * z * z - s.ln() - 0.5 * LN_2PI
            })
            .sum())
    }

    pub fn log_prob_grad(&self, action: &[f64]) -> Result<Vec<f64>> {
        check_len("gaussian action", action.len(), self.dim())?;
        let n = self.dim();
        let mut g = vec![0.0; 2 * n];
        for i in 0..n {
            let d = action[i] - self.mean[i];
            let s = self.std[i];
            g[i] = d / (s * s);
            g[n + i] = -1.0 / s + d * d / (s * s * s);
        }
        Ok(g)
    }

    /// Draws standard-normal noise `ε` and returns `(mean + std ⊙ ε, ε)`.
    pub fn rsample(&self, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
        let eps: Vec<f64> = (0..self.dim()).map(|_| rng.normal()).collect();
        (self.action_from_noise(&eps), eps)
    }

    pub fn action_from_noise(&self, eps: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std)
            .zip(eps)
            .map(|((m, s), e)| m + s * e)
            .collect()
    }

    /// Maps `d/daction` of a reparameterized sample to `[d/dmean.., d/dstd..]`.
    pub fn rsample_grad(&self, action_grad: &[f64], eps: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut g = vec![0.0; 2 * n];
        for i in 0..n {
            g[i] = action_grad[i];
            g[n + i] = action_grad[i] * eps[i];
        }
        g
    }
}

/// Squashing of the raw policy-network heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquashSpec {
    pub sigma_max: f64,
}

impl Default for SquashSpec {
    fn default() -> Self {
        Self { sigma_max: 1.0 }
    }
}

impl SquashSpec {
    pub fn new(sigma_max: f64) -> Result<Self> {
        if !(sigma_max > SIGMA_MIN) {
            return Err(Error::config("sigma_max", format!("must exceed {SIGMA_MIN}, got {sigma_max}")));
        }
        Ok(Self { sigma_max })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `mean = tanh(raw_mean)`, `std = 0.1 + (σmax − 0.1)·sigmoid(raw_log_sigma)`.
pub fn squash_head(raw_mean: &[f64], raw_log_sigma: &[f64], spec: SquashSpec) -> Result<DiagGaussian> {
    check_len("raw log sigma", raw_log_sigma.len(), raw_mean.len())?;
    let mean = raw_mean.iter().map(|m| m.tanh()).collect();
    let std = raw_log_sigma
        .iter()
        .map(|s| SIGMA_MIN + (spec.sigma_max - SIGMA_MIN) * sigmoid(*s))
        .collect();
    DiagGaussian::new(mean, std)
}

/// Chain rule through [`squash_head`]: `[d/dmean.., d/dstd..]` to
/// `[d/draw_mean.., d/draw_log_sigma..]`.
pub fn squash_backward(raw_mean: &[f64], raw_log_sigma: &[f64], spec: SquashSpec, grad: &[f64]) -> Vec<f64> {
    let n = raw_mean.len();
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        let t = raw_mean[i].tanh();
        out[i] = grad[i] * (1.0 - t * t);
        let f = sigmoid(raw_log_sigma[i]);
        out[n + i] = grad[n + i] * (spec.sigma_max - SIGMA_MIN) * f * (1.0 - f);
    }
    out
}
