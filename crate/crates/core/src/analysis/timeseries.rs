use std::io::Write;

use serde::Serialize;

use super::oracle::entropy_row;
use crate::algorithms::{AgentNets, Which};
use crate::envs::FactoredActionConfig;
use crate::error::{check_len, Error, Result};

/// One step of a recorded trajectory, with an optional event label
/// (for example `"on_target"`).
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub features: Vec<f64>,
    pub default_features: Vec<f64>,
    pub event: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlRow {
    pub t: usize,
    pub kl: f64,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KlSeries {
    pub rows: Vec<KlRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpikeStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    /// Steps above `mean + 2·std`.
    pub spikes: usize,
    /// Spikes that fall on an annotated step.
    pub spikes_at_events: usize,
    pub mean_at_events: f64,
    pub mean_elsewhere: f64,
}

/// `KL[π(·|x_t) ‖ π0(·|x_D,t)]` along a trajectory, using the online networks.
pub fn kl_timeseries(trajectory: &[TracePoint], nets: &AgentNets) -> Result<KlSeries> {
    let rows = trajectory
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let pi = nets.policy_dist(&p.features, Which::Online)?;
            let pi0 = nets.default_dist(&p.default_features, Which::Online)?;
            Ok(KlRow {
                t,
                kl: pi.kl(&pi0)?,
                event: p.event.clone().unwrap_or_default(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(KlSeries { rows })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl KlSeries {
    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.kl).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn spike_stats(&self) -> SpikeStats {
        let m = mean(self.rows.iter().map(|r| r.kl));
        let var = mean(self.rows.iter().map(|r| (r.kl - m).powi(2)));
        let std = var.sqrt();
        let threshold = m + 2.0 * std;
        let is_spike = |r: &&KlRow| r.kl > threshold;
        SpikeStats {
            mean: m,
            std,
            max: self.rows.iter().map(|r| r.kl).fold(f64::NEG_INFINITY, f64::max),
            spikes: self.rows.iter().filter(is_spike).count(),
            spikes_at_events: self.rows.iter().filter(is_spike).filter(|r| !r.event.is_empty()).count(),
            mean_at_events: mean(self.rows.iter().filter(|r| !r.event.is_empty()).map(|r| r.kl)),
            mean_elsewhere: mean(self.rows.iter().filter(|r| r.event.is_empty()).map(|r| r.kl)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisMarginal {
    pub axis: String,
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefaultMarginals {
    pub axes: Vec<AxisMarginal>,
    /// Entropy of the full composite distribution.
    pub entropy: f64,
}

impl DefaultMarginals {
    pub fn prob(&self, axis: &str, label: &str) -> Option<f64> {
        let a = self.axes.iter().find(|a| a.axis == axis)?;
        let i = a.labels.iter().position(|l| l == label)?;
        Some(a.probs[i])
    }
}

/// Per-axis marginals of a distribution over composite actions.
pub fn default_marginals(probs: &[f64], config: &FactoredActionConfig) -> Result<DefaultMarginals> {
    if probs.len() != config.num_actions() {
        return Err(Error::config(
            "env.axes",
            format!(
                "axes describe {} composite actions but the distribution has {}",
                config.num_actions(),
                probs.len()
            ),
        ));
    }
    let mut axes: Vec<AxisMarginal> = config
        .axes
        .iter()
        .map(|a| AxisMarginal {
            axis: a.name.clone(),
            labels: a.labels.clone(),
            probs: vec![0.0; a.labels.len()],
        })
        .collect();
    for (action, &p) in probs.iter().enumerate() {
        for (axis, label) in axes.iter_mut().zip(config.decompose(action)) {
            axis.probs[label] += p;
        }
    }
    Ok(DefaultMarginals { axes, entropy: entropy_row(probs) })
}

/// Marginal statistics of the default policy recorded over training.
#[derive(Debug, Clone, Default)]
pub struct MarginalsLog {
    pub rows: Vec<(u64, DefaultMarginals)>,
}

impl MarginalsLog {
    pub fn push(&mut self, learner_step: u64, marginals: DefaultMarginals) {
        self.rows.push((learner_step, marginals));
    }

    /// Columns `learner_step, entropy, <axis>:<label>…`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let Some((_, first)) = self.rows.first() else {
            w.flush()?;
            return Ok(());
        };
        let mut header = vec!["learner_step".to_string(), "entropy".to_string()];
        for a in &first.axes {
            header.extend(a.labels.iter().map(|l| format!("{}:{}", a.axis, l)));
        }
        w.write_record(&header)?;
        for (step, m) in &self.rows {
            let mut record = vec![step.to_string(), m.entropy.to_string()];
            for a in &m.axes {
                record.extend(a.probs.iter().map(f64::to_string));
            }
            check_len("marginal columns", record.len(), header.len())?;
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}
