//! Continuous 2-D point mass that must reach one of `K` targets.
//!
//! Observation groups: `proprio` (position, velocity; 4), `targets`
//! (target − position for each target; 2·K), `task_id` (one-hot; K).

use serde::{Deserialize, Serialize};

use super::{Environment, StepOutcome};
use crate::distributions::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::observation::{one_hot, ObservationSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassConfig {
    pub targets: usize,
    pub target_radius: f64,
    pub target_reward: f64,
    pub episode_length: usize,
    pub dt: f64,
    /// Velocity retained per step.
    pub damping: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            targets: 1,
            target_radius: 0.15,
            target_reward: 60.0,
            episode_length: 200,
            dt: 0.1,
            damping: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
struct PmState {
    pos: [f64; 2],
    vel: [f64; 2],
    targets: Vec<[f64; 2]>,
    task: usize,
    t: usize,
    done: bool,
}

pub struct PointMass {
    config: PointMassConfig,
    spec: ObservationSpec,
    state: Option<PmState>,
}

impl PointMass {
    pub fn new(config: PointMassConfig) -> Result<Self> {
        if config.targets == 0 {
            return Err(Error::config("env.targets", "need at least one target"));
        }
        if !(config.target_radius > 0.0) || !(config.dt > 0.0) || !(0.0..=1.0).contains(&config.damping) {
            return Err(Error::config("env", "radius and dt must be positive, damping in [0, 1]"));
        }
        if config.episode_length == 0 {
            return Err(Error::config("env.episode_length", "must be positive"));
        }
        let k = config.targets;
        let spec = ObservationSpec::from_pairs(&[("proprio", 4), ("targets", 2 * k), ("task_id", k)], 1)?;
        Ok(Self {
            config,
            spec,
            state: None,
        })
    }

    pub fn position(&self) -> Option<([f64; 2], [f64; 2])> {
        self.state.as_ref().map(|s| (s.pos, s.vel))
    }

    /// Puts the mass at rest at `pos` with explicit targets.
    pub fn place(&mut self, pos: [f64; 2], targets: Vec<[f64; 2]>, task: usize) -> Result<Vec<f64>> {
        if targets.len() != self.config.targets || task >= targets.len() {
            return Err(Error::invalid("targets do not fit this configuration"));
        }
        self.state = Some(PmState {
            pos,
            vel: [0.0; 2],
            targets,
            task,
            t: 0,
            done: false,
        });
        Ok(self.observe())
    }

    fn observe(&self) -> Vec<f64> {
        let s = self.state.as_ref().expect("observe before reset");
        let mut obs = vec![s.pos[0], s.pos[1], s.vel[0], s.vel[1]];
        for t in &s.targets {
            obs.push((t[0] - s.pos[0]) / 2.0);
            obs.push((t[1] - s.pos[1]) / 2.0);
        }
        obs.extend(one_hot(s.task, self.config.targets));
        obs
    }
}

impl Environment for PointMass {
    fn name(&self) -> &'static str {
        "point_mass"
    }

    fn observation_spec(&self) -> &ObservationSpec {
        &self.spec
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(2)
    }

    fn time_limit(&self) -> usize {
        self.config.episode_length
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let draw = |rng: &mut Rng| [1.6 * rng.uniform() - 0.8, 1.6 * rng.uniform() - 0.8];
        let pos = draw(rng);
        let r = self.config.target_radius;
        let mut targets: Vec<[f64; 2]> = Vec::new();
        while targets.len() < self.config.targets {
            let t = draw(rng);
            let far = |p: &[f64; 2]| ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt() > 3.0 * r;
            if far(&pos) && targets.iter().all(far) {
                targets.push(t);
            }
        }
        let task = rng.below(self.config.targets);
        self.place(pos, targets, task).expect("consistent")
    }

    fn step(&mut self, action: &Action, _rng: &mut Rng) -> Result<StepOutcome> {
        let force = match action {
            Action::Continuous(f) if f.len() == 2 && f.iter().all(|v| v.is_finite()) => {
                [f[0].clamp(-1.0, 1.0), f[1].clamp(-1.0, 1.0)]
            }
            _ => return Err(Error::invalid("point-mass action must be a finite 2-vector")),
        };
        let cfg = self.config.clone();
        let s = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Contract("step before reset".into()))?;
        if s.done {
            return Err(Error::Contract("stepping a finished episode".into()));
        }
        for i in 0..2 {
            s.vel[i] = cfg.damping * s.vel[i] + cfg.dt * force[i];
            s.pos[i] += cfg.dt * s.vel[i];
            if s.pos[i].abs() > 1.0 {
                s.pos[i] = s.pos[i].clamp(-1.0, 1.0);
                s.vel[i] = 0.0;
            }
        }
        let t = s.targets[s.task];
        let on_target = ((s.pos[0] - t[0]).powi(2) + (s.pos[1] - t[1]).powi(2)).sqrt() <= cfg.target_radius;
        s.t += 1;
        s.done = on_target || s.t >= cfg.episode_length;
        let done = s.done;
        Ok(StepOutcome {
            observation: self.observe(),
            reward: if on_target { cfg.target_reward } else { 0.0 },
            done,
            on_target,
        })
    }

    fn elapsed(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.t)
    }
}
