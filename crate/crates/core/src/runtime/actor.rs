use std::sync::Arc;

use parking_lot::RwLock;
use serde::Serialize;

use crate::algorithms::{AgentNets, Step, Window};
use crate::distributions::{Action, PolicyDistribution, PolicyHead};
use crate::envs::Environment;
use crate::error::Result;
use crate::numerics::{Mlp, Rng};
use crate::observation::{HistoryEncoder, MaskIndex, ObservationSpec};

use super::ReplayBuffer;

/// Immutable copy of the acting parameters.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub version: u64,
    pub policy: Mlp,
    pub default: Mlp,
    pub head: PolicyHead,
}

impl Snapshot {
    pub fn of(nets: &AgentNets, version: u64) -> Self {
        Self {
            version,
            policy: nets.policy.clone(),
            default: nets.default.clone(),
            head: nets.head,
        }
    }

    pub fn policy_dist(&self, features: &[f64]) -> Result<PolicyDistribution> {
        self.head.distribution(&self.policy.predict(features)?)
    }
}

/// Latest published parameters. Readers clone an `Arc`, so a publish never
/// waits on an actor and an actor never sees a half-written snapshot.
#[derive(Debug)]
pub struct ParamSnapshot {
    current: RwLock<Arc<Snapshot>>,
}

impl ParamSnapshot {
    pub fn new(nets: &AgentNets) -> Self {
        Self {
            current: RwLock::new(Arc::new(Snapshot::of(nets, 0))),
        }
    }

    /// Publishes the online policy and default nets under the next version.
    pub fn publish(&self, nets: &AgentNets) -> u64 {
        let mut guard = self.current.write();
        let version = guard.version + 1;
        *guard = Arc::new(Snapshot::of(nets, version));
        version
    }

    pub fn latest(&self) -> Arc<Snapshot> {
        self.current.read().clone()
    }

    pub fn version(&self) -> u64 {
        self.current.read().version
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub actor: usize,
    pub episode: u64,
    #[serde(rename = "return")]
    pub total_reward: f64,
    pub length: usize,
    pub on_target_steps: usize,
    /// Ended by the task rather than the time limit.
    pub terminated: bool,
}

/// Output of one actor transition.
#[derive(Debug, Default)]
pub struct ActorOutput {
    pub window: Option<Window>,
    pub episode: Option<EpisodeRecord>,
}

/// One environment with its history encoder and the partially filled window.
pub struct Actor {
    id: usize,
    env: Box<dyn Environment>,
    encoder: HistoryEncoder,
    mask: MaskIndex,
    rng: Rng,
    unroll: usize,
    features: Option<Vec<f64>>,
    pending: Vec<Step>,
    episode: u64,
    episode_return: f64,
    on_target_steps: usize,
    env_steps: u64,
}

impl Actor {
    pub fn new(id: usize, env: Box<dyn Environment>, obs_spec: &ObservationSpec, mask: MaskIndex, unroll: usize, rng: Rng) -> Self {
        Self {
            id,
            env,
            encoder: HistoryEncoder::new(obs_spec),
            mask,
            rng,
            unroll,
            features: None,
            pending: Vec::new(),
            episode: 0,
            episode_return: 0.0,
            on_target_steps: 0,
            env_steps: 0,
        }
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn current_features(&mut self) -> Result<Vec<f64>> {
        if let Some(x) = &self.features {
            return Ok(x.clone());
        }
        self.encoder.reset();
        let obs = self.env.reset(&mut self.rng);
        let x = self.encoder.encode(&obs)?.into_vec();
        self.features = Some(x.clone());
        Ok(x)
    }

    /// Acts once with `π` from `snapshot`. A window is emitted after `unroll`
    /// steps or at the end of an episode; only a task ending (not the time
    /// limit) marks its last step terminal.
    pub fn step(&mut self, snapshot: &Snapshot) -> Result<ActorOutput> {
        let features = self.current_features()?;
        let pi = snapshot.policy_dist(&features)?;
        let action = pi.sample(&mut self.rng);
        let behavior_log_prob = pi.log_prob(&action)?;
        let out = self.env.step(&action, &mut self.rng)?;
        self.env_steps += 1;
        self.episode_return += out.reward;
        self.on_target_steps += usize::from(out.on_target);
        let terminal = out.done && self.env.elapsed() < self.env.time_limit();
        let default_features = self.mask.default_features(&features);
        self.pending.push(Step {
            features,
            default_features,
            action,
            reward: out.reward,
            behavior_log_prob,
            terminal,
        });
        let next = self.encoder.encode(&out.observation)?.into_vec();
        let mut output = ActorOutput::default();
        if self.pending.len() == self.unroll || out.done {
            let steps = std::mem::take(&mut self.pending);
            let next_default = self.mask.default_features(&next);
            output.window = Some(Window::new(steps, next.clone(), next_default)?);
        }
        if out.done {
            output.episode = Some(EpisodeRecord {
                actor: self.id,
                episode: self.episode,
                total_reward: self.episode_return,
                length: self.env.elapsed(),
                on_target_steps: self.on_target_steps,
                terminated: terminal,
            });
            self.episode += 1;
            self.episode_return = 0.0;
            self.on_target_steps = 0;
            self.features = None;
        } else {
            self.features = Some(next);
        }
        Ok(output)
    }
}

/// Runs `n_steps` transitions, pushing every completed window into `replay`.
pub fn run_actor(snapshot: &Snapshot, actor: &mut Actor, n_steps: usize, replay: &ReplayBuffer) -> Result<Vec<EpisodeRecord>> {
    let mut episodes = Vec::new();
    for _ in 0..n_steps {
        let out = actor.step(snapshot)?;
        if let Some(w) = out.window {
            replay.push(w)?;
        }
        episodes.extend(out.episode);
    }
    Ok(episodes)
}

/// Returns of `episodes` full episodes with actions sampled from `π`.
pub fn evaluate_policy(
    snapshot: &Snapshot,
    env: &mut dyn Environment,
    obs_spec: &ObservationSpec,
    episodes: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut encoder = HistoryEncoder::new(obs_spec);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        encoder.reset();
        let mut x = encoder.encode(&env.reset(rng))?.into_vec();
        let mut total = 0.0;
        loop {
            let action: Action = snapshot.policy_dist(&x)?.sample(rng);
            let out = env.step(&action, rng)?;
            total += out.reward;
            if out.done {
                break;
            }
            x = encoder.encode(&out.observation)?.into_vec();
        }
        returns.push(total);
    }
    Ok(returns)
}
