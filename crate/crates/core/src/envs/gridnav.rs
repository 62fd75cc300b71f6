//! Multi-target grid navigation.
//!
//! The agent walks on a `size × size` grid containing `targets` distinct
//! target cells; one of them is commanded per episode by a one-hot task id.
//! Observation groups, in order:
//!
//! | group         | len     | content                                          |
//! |---------------|---------|--------------------------------------------------|
//! | `proprio`     | 2       | agent cell scaled to [−1, 1]                     |
//! | `last_action` | 5       | one-hot previous action (only if enabled)        |
//! | `targets`     | 2·K     | target − agent, divided by `size − 1`            |
//! | `task_id`     | K       | one-hot commanded target                         |

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tabular::{fix_row_sum, TabularMdp, MAX_TABULAR_STATES};
use super::{Environment, StepOutcome};
use crate::distributions::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::observation::{normalize_cell, one_hot, MaskIndex, MaskSpec, ObservationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskVariant {
    /// Reaching the commanded target pays `target_reward` and ends the episode.
    TerminateOnGoal,
    /// Every step on the target pays `moving_reward`; after `hold_steps`
    /// consecutive steps the target respawns elsewhere.
    MovingTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridNavConfig {
    pub size: usize,
    pub targets: usize,
    pub reward_mode: RewardMode,
    pub variant: TaskVariant,
    pub target_reward: f64,
    pub moving_reward: f64,
    pub hold_steps: usize,
    pub episode_length: usize,
    pub last_action: bool,
}

impl Default for GridNavConfig {
    fn default() -> Self {
        Self {
            size: 8,
            targets: 1,
            reward_mode: RewardMode::Sparse,
            variant: TaskVariant::TerminateOnGoal,
            target_reward: 60.0,
            moving_reward: 1.0,
            hold_steps: 10,
            episode_length: 100,
            last_action: false,
        }
    }
}

impl GridNavConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::config("env.size", "grid must be at least 2x2"));
        }
        if self.targets == 0 {
            return Err(Error::config("env.targets", "need at least one target"));
        }
        if self.targets + 1 > self.size * self.size {
            return Err(Error::config("env.targets", "more targets than free cells"));
        }
        if self.episode_length == 0 {
            return Err(Error::config("env.episode_length", "must be positive"));
        }
        if self.variant == TaskVariant::MovingTarget && self.hold_steps == 0 {
            return Err(Error::config("env.hold_steps", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up,
    Down,
    Right,
    Left,
    Stay,
}

impl GridAction {
    pub const COUNT: usize = 5;

    pub fn from_index(i: usize) -> Option<Self> {
        [Self::Up, Self::Down, Self::Right, Self::Left, Self::Stay].get(i).copied()
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Self::Up => (0, 1),
            Self::Down => (0, -1),
            Self::Right => (1, 0),
            Self::Left => (-1, 0),
            Self::Stay => (0, 0),
        }
    }
}

type Cell = (usize, usize);

/// Identity of a GridNav state up to the step counter and last action.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridKey {
    pub agent: Cell,
    pub targets: Vec<Cell>,
    pub task: usize,
    pub hold: usize,
}

#[derive(Debug, Clone)]
struct GridState {
    key: GridKey,
    t: usize,
    done: bool,
    last_action: Option<usize>,
}

pub struct GridNav {
    config: GridNavConfig,
    spec: ObservationSpec,
    state: Option<GridState>,
}

impl GridNav {
    pub fn new(config: GridNavConfig) -> Result<Self> {
        config.validate()?;
        let k = config.targets;
        let mut groups = vec![("proprio", 2)];
        if config.last_action {
            groups.push(("last_action", GridAction::COUNT));
        }
        groups.push(("targets", 2 * k));
        groups.push(("task_id", k));
        let spec = ObservationSpec::from_pairs(&groups, 1)?;
        Ok(Self {
            config,
            spec,
            state: None,
        })
    }

    pub fn config(&self) -> &GridNavConfig {
        &self.config
    }

    pub fn key(&self) -> Option<&GridKey> {
        self.state.as_ref().map(|s| &s.key)
    }

    /// Places the environment in an explicit state at step 0.
    pub fn set_key(&mut self, key: GridKey) -> Result<Vec<f64>> {
        let n = self.config.size;
        if key.targets.len() != self.config.targets
            || key.task >= self.config.targets
            || key.agent.0 >= n
            || key.agent.1 >= n
            || key.targets.iter().any(|t| t.0 >= n || t.1 >= n)
        {
            return Err(Error::invalid("grid key does not fit this configuration"));
        }
        self.state = Some(GridState {
            key,
            t: 0,
            done: false,
            last_action: None,
        });
        Ok(self.observe())
    }

    fn observe(&self) -> Vec<f64> {
        let s = self.state.as_ref().expect("observe before reset");
        observation_for(&self.config, &s.key, s.last_action)
    }

    fn random_free_cell(&self, taken: &[Cell], rng: &mut Rng) -> Cell {
        let n = self.config.size;
        loop {
            let c = (rng.below(n), rng.below(n));
            if !taken.contains(&c) {
                return c;
            }
        }
    }

    fn shaped(&self, agent: Cell, target: Cell) -> f64 {
        let n = self.config.size;
        let dx = normalize_cell(agent.0, n) - normalize_cell(target.0, n);
        let dy = normalize_cell(agent.1, n) - normalize_cell(target.1, n);
        (-(dx * dx + dy * dy)).exp()
    }

    /// Exact tabular form of the task (no time limit, no last-action feature).
    ///
    /// The final state is the absorbing terminal state. When `mask` is given
    /// the mask map groups states by their default-policy features.
    pub fn enumerate(config: &GridNavConfig, mask: Option<&MaskSpec>, gamma: f64) -> Result<GridNavTabular> {
        config.validate()?;
        if config.last_action {
            return Err(Error::config("env.last_action", "enumeration needs last_action = false"));
        }
        let n = config.size;
        let cells = n * n;
        let k = config.targets;
        let holds = match config.variant {
            TaskVariant::TerminateOnGoal => 1,
            TaskVariant::MovingTarget => config.hold_steps,
        };
        let mut count: u128 = cells as u128 * k as u128 * holds as u128;
        for i in 0..k {
            count *= (cells - i) as u128;
        }
        if count + 1 > MAX_TABULAR_STATES as u128 {
            return Err(Error::invalid(format!(
                "state space too large to enumerate: {} states (limit {MAX_TABULAR_STATES})",
                count + 1
            )));
        }

        let all_cells: Vec<Cell> = (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).collect();
        let mut keys = Vec::new();
        let mut assignments: Vec<Vec<Cell>> = vec![vec![]];
        for _ in 0..k {
            let mut next = Vec::new();
            for a in &assignments {
                for &c in &all_cells {
                    if !a.contains(&c) {
                        let mut b = a.clone();
                        b.push(c);
                        next.push(b);
                    }
                }
            }
            assignments = next;
        }
        for &agent in &all_cells {
            for targets in &assignments {
                for task in 0..k {
                    // Off the commanded target the hold counter is always 0; on it
                    // only MovingTarget can be observed.
                    let hold_range = if agent != targets[task] {
                        0..1
                    } else if config.variant == TaskVariant::MovingTarget {
                        0..holds
                    } else {
                        0..0
                    };
                    for hold in hold_range {
                        keys.push(GridKey {
                            agent,
                            targets: targets.clone(),
                            task,
                            hold,
                        });
                    }
                }
            }
        }
        let index: HashMap<GridKey, usize> = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let terminal_state = keys.len();
        let num_states = keys.len() + 1;
        let na = GridAction::COUNT;

        let env = GridNav::new(config.clone())?;
        let mut transitions = Vec::with_capacity(num_states * na);
        let mut rewards = Vec::with_capacity(num_states * na);
        for key in &keys {
            for a in 0..na {
                let (row, r) = env.tabular_row(key, a, &index, terminal_state);
                transitions.push(row);
                rewards.push(r);
            }
        }
        for _ in 0..na {
            transitions.push(vec![(terminal_state, 1.0)]);
            rewards.push(0.0);
        }

        let mut initial = vec![0.0; num_states];
        let starts: Vec<usize> = keys
            .iter()
            .enumerate()
            .filter(|(_, k)| k.hold == 0 && !k.targets.contains(&k.agent))
            .map(|(i, _)| i)
            .collect();
        for &i in &starts {
            initial[i] = 1.0 / starts.len() as f64;
        }
        let mut terminal = vec![false; num_states];
        terminal[terminal_state] = true;

        let mask_map = match mask {
            None => (0..num_states).collect(),
            Some(mask) => {
                let idx = MaskIndex::new(&env.spec, mask)?;
                let mut values: HashMap<Vec<u64>, usize> = HashMap::new();
                let mut map = Vec::with_capacity(num_states);
                for key in &keys {
                    let obs = observation_for(config, key, None);
                    let bits: Vec<u64> = idx.default_features(&obs).iter().map(|v| v.to_bits()).collect();
                    let next = values.len();
                    map.push(*values.entry(bits).or_insert(next));
                }
                let next = values.len();
                map.push(next);
                map
            }
        };

        let mdp = TabularMdp {
            num_states,
            num_actions: na,
            transitions,
            rewards,
            initial,
            gamma,
            terminal,
            mask_map,
        };
        mdp.validate()?;
        Ok(GridNavTabular {
            mdp,
            keys,
            index,
        })
    }

    fn tabular_row(
        &self,
        key: &GridKey,
        action: usize,
        index: &HashMap<GridKey, usize>,
        terminal_state: usize,
    ) -> (Vec<(usize, f64)>, f64) {
        let cfg = &self.config;
        let agent = self.moved(key.agent, GridAction::from_index(action).expect("valid action"));
        let target = key.targets[key.task];
        let shaping = match cfg.reward_mode {
            RewardMode::Dense => self.shaped(agent, target),
            RewardMode::Sparse => 0.0,
        };
        match cfg.variant {
            TaskVariant::TerminateOnGoal => {
                if agent == target {
                    (vec![(terminal_state, 1.0)], cfg.target_reward + shaping)
                } else {
                    let next = GridKey {
                        agent,
                        ..key.clone()
                    };
                    (vec![(index[&next], 1.0)], shaping)
                }
            }
            TaskVariant::MovingTarget => {
                if agent != target {
                    let next = GridKey {
                        agent,
                        hold: 0,
                        ..key.clone()
                    };
                    return (vec![(index[&next], 1.0)], shaping);
                }
                let reward = match cfg.reward_mode {
                    RewardMode::Sparse => cfg.moving_reward,
                    RewardMode::Dense => shaping,
                };
                if key.hold + 1 < cfg.hold_steps {
                    let next = GridKey {
                        agent,
                        hold: key.hold + 1,
                        ..key.clone()
                    };
                    return (vec![(index[&next], 1.0)], reward);
                }
                let mut taken = key.targets.clone();
                taken.push(agent);
                let n = cfg.size;
                let free: Vec<Cell> = (0..n)
                    .flat_map(|x| (0..n).map(move |y| (x, y)))
                    .filter(|c| !taken.contains(c))
                    .collect();
                let p = 1.0 / free.len() as f64;
                let mut row: Vec<(usize, f64)> = free
                    .into_iter()
                    .map(|c| {
                        let mut targets = key.targets.clone();
                        targets[key.task] = c;
                        let next = GridKey {
                            agent,
                            targets,
                            task: key.task,
                            hold: 0,
                        };
                        (index[&next], p)
                    })
                    .collect();
                fix_row_sum(&mut row);
                (row, reward)
            }
        }
    }

    fn moved(&self, agent: Cell, action: GridAction) -> Cell {
        let (dx, dy) = action.delta();
        let n = self.config.size as i64;
        let x = agent.0 as i64 + dx;
        let y = agent.1 as i64 + dy;
        if x < 0 || y < 0 || x >= n || y >= n {
            agent
        } else {
            (x as usize, y as usize)
        }
    }
}

fn observation_for(cfg: &GridNavConfig, key: &GridKey, last_action: Option<usize>) -> Vec<f64> {
    let n = cfg.size;
    let scale = (n - 1) as f64;
    let mut obs = Vec::with_capacity(2 + 3 * cfg.targets + GridAction::COUNT);
    obs.push(normalize_cell(key.agent.0, n));
    obs.push(normalize_cell(key.agent.1, n));
    if cfg.last_action {
        obs.extend(one_hot(last_action.unwrap_or(usize::MAX), GridAction::COUNT));
    }
    for t in &key.targets {
        obs.push((t.0 as f64 - key.agent.0 as f64) / scale);
        obs.push((t.1 as f64 - key.agent.1 as f64) / scale);
    }
    obs.extend(one_hot(key.task, cfg.targets));
    obs
}

/// Enumerated GridNav with the map between environment states and indices.
#[derive(Debug, Clone)]
pub struct GridNavTabular {
    pub mdp: TabularMdp,
    pub keys: Vec<GridKey>,
    pub index: HashMap<GridKey, usize>,
}

impl GridNavTabular {
    pub fn terminal_state(&self) -> usize {
        self.keys.len()
    }
}

impl Environment for GridNav {
    fn name(&self) -> &'static str {
        "gridnav"
    }

    fn observation_spec(&self) -> &ObservationSpec {
        &self.spec
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(GridAction::COUNT)
    }

    fn time_limit(&self) -> usize {
        self.config.episode_length
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let n = self.config.size;
        let agent = (rng.below(n), rng.below(n));
        let mut taken = vec![agent];
        for _ in 0..self.config.targets {
            let c = self.random_free_cell(&taken, rng);
            taken.push(c);
        }
        let task = rng.below(self.config.targets);
        self.state = Some(GridState {
            key: GridKey {
                agent,
                targets: taken[1..].to_vec(),
                task,
                hold: 0,
            },
            t: 0,
            done: false,
            last_action: None,
        });
        self.observe()
    }

    fn step(&mut self, action: &Action, rng: &mut Rng) -> Result<StepOutcome> {
        let a = match action {
            Action::Discrete(a) if *a < GridAction::COUNT => *a,
            _ => return Err(Error::invalid(format!("gridnav action must be 0..5, got {action:?}"))),
        };
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Contract("step before reset".into()))?;
        if state.done {
            return Err(Error::Contract("stepping a finished episode".into()));
        }
        let key = state.key.clone();
        let agent = self.moved(key.agent, GridAction::from_index(a).expect("checked"));
        let target = key.targets[key.task];
        let cfg = self.config.clone();
        let shaping = match cfg.reward_mode {
            RewardMode::Dense => self.shaped(agent, target),
            RewardMode::Sparse => 0.0,
        };
        let mut next = GridKey {
            agent,
            ..key.clone()
        };
        let on_target = agent == target;
        let (reward, mut done) = match cfg.variant {
            TaskVariant::TerminateOnGoal => {
                if on_target {
                    (cfg.target_reward + shaping, true)
                } else {
                    (shaping, false)
                }
            }
            TaskVariant::MovingTarget => {
                if on_target {
                    next.hold += 1;
                    if next.hold == cfg.hold_steps {
                        let mut taken = key.targets.clone();
                        taken.push(agent);
                        next.targets[key.task] = self.random_free_cell(&taken, rng);
                        next.hold = 0;
                    }
                    let r = match cfg.reward_mode {
                        RewardMode::Sparse => cfg.moving_reward,
                        RewardMode::Dense => shaping,
                    };
                    (r, false)
                } else {
                    next.hold = 0;
                    (shaping, false)
                }
            }
        };
        let state = self.state.as_mut().expect("checked");
        state.t += 1;
        if state.t >= cfg.episode_length {
            done = true;
        }
        state.key = next;
        state.done = done;
        state.last_action = Some(a);
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done,
            on_target,
        })
    }

    fn elapsed(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.t)
    }
}
