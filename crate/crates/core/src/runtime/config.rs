use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    AgentNets, Algorithm, AlgorithmRegistry, Architecture, HyperParams, Reference, Regularizer, RegularizerRegistry,
};
use crate::distributions::{PolicyHead, SquashSpec};
use crate::envs::{EnvRegistry, Environment};
use crate::error::{Error, Result};
use crate::numerics::{checkpoint, Rng};
use crate::observation::{MaskIndex, MaskSpec, ObservationSpec};

/// `[env]` section: `kind` selects the environment, every other key is
/// passed to its config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSection {
    pub kind: String,
    #[serde(flatten)]
    pub params: toml::Table,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            kind: "gridnav".into(),
            params: toml::Table::new(),
        }
    }
}

/// `[pretrained]` section: a default-policy checkpoint to start from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainedDefault {
    pub path: PathBuf,
    /// Keep `φ` fixed for the whole run.
    #[serde(default)]
    pub freeze: bool,
}

/// Everything that determines a run, given its seed.
///
/// | field | default | meaning |
/// |---|---|---|
/// | `name` | `"run"` | subdirectory of `log_dir` |
/// | `seed` | 0 | root of every random stream |
/// | `actors` | 4 | actor count |
/// | `threaded` | false | actors on threads; otherwise the deterministic single-thread loop |
/// | `learner_steps` | 10000 | updates to perform |
/// | `env_steps_per_update` | 16 | actor transitions per learner step (single-thread mode and threaded rate limit) |
/// | `min_replay` | 1000 | transitions collected before the first update |
/// | `replay_capacity` | 100000 | replay size in transitions |
/// | `eval_period` | 500 | learner steps between evaluations (and log rows) |
/// | `eval_episodes` | 20 | stochastic evaluation episodes |
/// | `snapshot_period` | 10 | learner steps between parameter publishes |
/// | `checkpoint_period` | 0 | learner steps between checkpoints; 0 keeps only the final one |
/// | `stop_at_return` | none | stop once the evaluation median reaches this |
/// | `log_dir` | none | no files are written without it |
/// | `history_window` | 1 | observation steps concatenated into `x` |
/// | `mask` | `"proprio_only"` | default-policy mask, a preset or a list of groups |
/// | `algorithm` | `"retrace"` | `kstep`, `retrace` or `vtrace` |
/// | `regularizer` | `"kl_reg"` | any registered regularizer |
/// | `sigma_max` | 1.0 | Gaussian head standard-deviation cap |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub actors: usize,
    pub threaded: bool,
    pub learner_steps: u64,
    pub env_steps_per_update: usize,
    pub min_replay: usize,
    pub replay_capacity: usize,
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub snapshot_period: u64,
    pub checkpoint_period: u64,
    pub stop_at_return: Option<f64>,
    pub log_dir: Option<PathBuf>,
    pub history_window: usize,
    pub mask: MaskSpec,
    pub algorithm: String,
    pub regularizer: String,
    pub sigma_max: f64,
    pub env: EnvSection,
    pub hp: HyperParams,
    pub architecture: Architecture,
    pub pretrained: Option<PretrainedDefault>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            seed: 0,
            actors: 4,
            threaded: false,
            learner_steps: 10_000,
            env_steps_per_update: 16,
            min_replay: 1000,
            replay_capacity: 100_000,
            eval_period: 500,
            eval_episodes: 20,
            snapshot_period: 10,
            checkpoint_period: 0,
            stop_at_return: None,
            log_dir: None,
            history_window: 1,
            mask: MaskSpec::PROPRIO_ONLY,
            algorithm: "retrace".into(),
            regularizer: "kl_reg".into(),
            sigma_max: 1.0,
            env: EnvSection::default(),
            hp: HyperParams::default(),
            architecture: Architecture::default(),
            pretrained: None,
        }
    }
}

/// Resolved pieces of a config that every component shares.
pub struct Setup {
    pub obs_spec: ObservationSpec,
    pub mask: MaskIndex,
    pub head: PolicyHead,
    /// Input length of the default network (full features for a policy snapshot).
    pub default_len: usize,
}

fn positive(field: &str, value: u64) -> Result<()> {
    if value == 0 {
        return Err(Error::config(field, "must be positive"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| text[..s.start].lines().count().to_string())
                .map_or_else(|| "config".to_string(), |line| format!("config (line {line})"));
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn validate(&self) -> Result<()> {
        positive("actors", self.actors as u64)?;
        positive("env_steps_per_update", self.env_steps_per_update as u64)?;
        positive("replay_capacity", self.replay_capacity as u64)?;
        positive("eval_period", self.eval_period)?;
        positive("snapshot_period", self.snapshot_period)?;
        positive("history_window", self.history_window as u64)?;
        if self.min_replay > self.replay_capacity {
            return Err(Error::config("min_replay", "exceeds replay_capacity"));
        }
        self.hp.validate()?;
        AlgorithmRegistry::default().build(&self.algorithm)?;
        RegularizerRegistry::default().build(&self.regularizer, &self.hp)?;
        SquashSpec::new(self.sigma_max)?;
        self.build_env()?;
        self.setup()?;
        Ok(())
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment>> {
        EnvRegistry::default().build(&self.env.kind, &self.env.params)
    }

    pub fn build_algorithm(&self) -> Result<Box<dyn Algorithm>> {
        AlgorithmRegistry::default().build(&self.algorithm)
    }

    pub fn build_regularizer(&self) -> Result<Box<dyn Regularizer>> {
        RegularizerRegistry::default().build(&self.regularizer, &self.hp)
    }

    pub fn setup(&self) -> Result<Setup> {
        let env = self.build_env()?;
        let obs_spec = env.observation_spec().with_window(self.history_window)?;
        let snapshot = matches!(self.build_regularizer()?.reference(), Reference::PolicySnapshot { .. });
        // A snapshot of the agent policy sees what the agent sees.
        let mask_spec = if snapshot { MaskSpec::FULL_INFORMATION } else { self.mask.clone() };
        let mask = mask_spec.index(&obs_spec)?;
        let default_len = mask.default_len();
        Ok(Setup {
            head: PolicyHead::for_space(env.action_space(), SquashSpec::new(self.sigma_max)?),
            obs_spec,
            mask,
            default_len,
        })
    }

    /// Freshly initialized networks, with the pretrained default loaded if configured.
    pub fn build_nets(&self, rng: &mut Rng) -> Result<AgentNets> {
        let setup = self.setup()?;
        let algorithm = self.build_algorithm()?;
        let mut arch = self.architecture.clone();
        if let Reference::PolicySnapshot { .. } = self.build_regularizer()?.reference() {
            arch.default_hidden = arch.policy_hidden.clone();
        }
        let mut nets = AgentNets::new(
            setup.obs_spec.total_len(),
            setup.default_len,
            setup.head,
            algorithm.critic_kind(setup.head.action_space()),
            &arch,
            rng,
        )?;
        if let Some(pre) = &self.pretrained {
            let loaded = checkpoint::load(&pre.path)
                .map_err(|e| Error::config("pretrained.path", format!("{}: {e}", pre.path.display())))?;
            if !loaded.same_layout(&nets.default) {
                return Err(Error::config(
                    "pretrained.path",
                    format!(
                        "checkpoint layers {:?} do not match the default network {:?}",
                        loaded.layer_sizes(),
                        nets.default.layer_sizes()
                    ),
                ));
            }
            nets.default_target = loaded.clone();
            nets.default = loaded;
        }
        Ok(nets)
    }

    pub fn freeze_default(&self) -> bool {
        self.pretrained.as_ref().is_some_and(|p| p.freeze)
    }

    /// `log_dir/name`, if logging is enabled.
    pub fn run_dir(&self) -> Option<PathBuf> {
        self.log_dir.as_ref().map(|d| d.join(&self.name))
    }
}
