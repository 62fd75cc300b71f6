//! Maze navigation with a flat, factored composite action space.
//!
//! Each composite action picks one label per axis. The default axes are
//! `move {forward, backward, none} × turn {left, right, none} ×
//! strafe {left, right, none} × look {up, down, none}` (81 actions). Only
//! translation changes position: `strafe` adds a lateral component to a
//! forward/backward step and does nothing on its own; `look` has no effect.
//! Axes or labels with unknown names are accepted and act as no-ops, which is
//! how larger flat spaces are configured.
//!
//! Observation groups: `proprio` (heading one-hot, 4), `sensors` (walls at
//! front, front-left, front-right, left, right; 5), `goal` (visibility flag,
//! then the goal offset in the agent frame, forward then right, scaled by
//! `size − 1`; 3) and optionally `last_action` (one-hot composite). With
//! `line_of_sight` the goal group is all zeros unless the goal is straight
//! ahead and unobstructed, a coarse stand-in for a forward-facing camera.

use serde::{Deserialize, Serialize};

use super::{Environment, StepOutcome};
use crate::distributions::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::observation::{one_hot, ObservationSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub labels: Vec<String>,
}

impl AxisSpec {
    pub fn new(name: &str, labels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            labels: labels.iter().map(|l| l.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactoredActionConfig {
    pub axes: Vec<AxisSpec>,
    /// Side of the square maze, odd, including the outer wall.
    pub size: usize,
    pub layout_seed: u64,
    /// Fraction of remaining inner walls knocked out after carving, adding loops.
    pub loop_fraction: f64,
    pub goal_reward: f64,
    pub episode_length: usize,
    pub last_action: bool,
    /// Reveal the goal only when it is straight ahead with no wall in between.
    pub line_of_sight: bool,
}

impl Default for FactoredActionConfig {
    fn default() -> Self {
        Self {
            axes: vec![
                AxisSpec::new("move", &["forward", "backward", "none"]),
                AxisSpec::new("turn", &["left", "right", "none"]),
                AxisSpec::new("strafe", &["left", "right", "none"]),
                AxisSpec::new("look", &["up", "down", "none"]),
            ],
            size: 9,
            layout_seed: 0,
            loop_fraction: 0.3,
            goal_reward: 10.0,
            episode_length: 500,
            last_action: false,
            line_of_sight: false,
        }
    }
}

impl FactoredActionConfig {
    pub fn num_actions(&self) -> usize {
        self.axes.iter().map(|a| a.labels.len()).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.iter().any(|a| a.labels.is_empty()) {
            return Err(Error::config("env.axes", "every axis needs at least one label"));
        }
        if self.num_actions() < 2 {
            return Err(Error::config("env.axes", "need at least two composite actions"));
        }
        if self.size < 5 || self.size % 2 == 0 {
            return Err(Error::config("env.size", "maze size must be odd and at least 5"));
        }
        if !(0.0..=1.0).contains(&self.loop_fraction) {
            return Err(Error::config("env.loop_fraction", "must lie in [0, 1]"));
        }
        if self.episode_length == 0 {
            return Err(Error::config("env.episode_length", "must be positive"));
        }
        Ok(())
    }

    /// Per-axis label index of a composite action (first axis most significant).
    pub fn decompose(&self, mut action: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for (i, axis) in self.axes.iter().enumerate().rev() {
            out[i] = action % axis.labels.len();
            action /= axis.labels.len();
        }
        out
    }

    pub fn compose(&self, labels: &[usize]) -> usize {
        self.axes
            .iter()
            .zip(labels)
            .fold(0, |acc, (axis, &l)| acc * axis.labels.len() + l)
    }

    pub fn axis_position(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    fn label_of(&self, labels: &[usize], axis: &str) -> Option<&str> {
        let i = self.axis_position(axis)?;
        Some(self.axes[i].labels[labels[i]].as_str())
    }

    fn effect(&self, action: usize) -> Effect {
        let labels = self.decompose(action);
        let forward = match self.label_of(&labels, "move") {
            Some("forward") => 1,
            Some("backward") => -1,
            _ => 0,
        };
        let right = if forward == 0 {
            0
        } else {
            match self.label_of(&labels, "strafe") {
                Some("right") => 1,
                Some("left") => -1,
                _ => 0,
            }
        };
        let turn = match self.label_of(&labels, "turn") {
            Some("right") => 1,
            Some("left") => -1,
            _ => 0,
        };
        Effect { forward, right, turn }
    }

    /// Class id per composite action; actions with the same id have
    /// identical effects on the environment.
    pub fn redundancy_classes(&self) -> Vec<usize> {
        let mut seen: Vec<Effect> = Vec::new();
        (0..self.num_actions())
            .map(|a| {
                let e = self.effect(a);
                match seen.iter().position(|s| *s == e) {
                    Some(i) => i,
                    None => {
                        seen.push(e);
                        seen.len() - 1
                    }
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Effect {
    forward: i64,
    right: i64,
    turn: i64,
}

/// Facing direction; `North` is +y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    fn index(self) -> usize {
        self as usize
    }

    fn from_index(i: usize) -> Self {
        [Heading::North, Heading::East, Heading::South, Heading::West][i % 4]
    }

    fn forward(self) -> (i64, i64) {
        match self {
            Heading::North => (0, 1),
            Heading::East => (1, 0),
            Heading::South => (0, -1),
            Heading::West => (-1, 0),
        }
    }

    fn right(self) -> (i64, i64) {
        Heading::from_index(self.index() + 1).forward()
    }

    fn turned(self, turn: i64) -> Heading {
        Heading::from_index((self.index() as i64 + turn).rem_euclid(4) as usize)
    }
}

#[derive(Debug, Clone)]
struct MazeState {
    pos: (usize, usize),
    heading: Heading,
    goal: (usize, usize),
    t: usize,
    done: bool,
    last_action: Option<usize>,
}

pub struct FactoredMaze {
    config: FactoredActionConfig,
    walls: Vec<bool>,
    open: Vec<(usize, usize)>,
    spec: ObservationSpec,
    state: Option<MazeState>,
}

fn carve(size: usize, seed: u64, loop_fraction: f64) -> Vec<bool> {
    let mut rng = Rng::new(seed);
    let mut walls = vec![true; size * size];
    let idx = |x: usize, y: usize| y * size + x;
    let rooms = (size - 1) / 2;
    let mut visited = vec![false; rooms * rooms];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    walls[idx(1, 1)] = false;
    while let Some(&(rx, ry)) = stack.last() {
        let mut options = Vec::new();
        if rx > 0 && !visited[ry * rooms + rx - 1] {
            options.push((rx - 1, ry));
        }
        if rx + 1 < rooms && !visited[ry * rooms + rx + 1] {
            options.push((rx + 1, ry));
        }
        if ry > 0 && !visited[(ry - 1) * rooms + rx] {
            options.push((rx, ry - 1));
        }
        if ry + 1 < rooms && !visited[(ry + 1) * rooms + rx] {
            options.push((rx, ry + 1));
        }
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let (nx, ny) = options[rng.below(options.len())];
        visited[ny * rooms + nx] = true;
        walls[idx(2 * nx + 1, 2 * ny + 1)] = false;
        walls[idx(rx + nx + 1, ry + ny + 1)] = false;
        stack.push((nx, ny));
    }
    // Knock out a share of the inner walls that separate two open cells.
    let mut candidates = Vec::new();
    for y in 1..size - 1 {
        for x in 1..size - 1 {
            if !walls[idx(x, y)] {
                continue;
            }
            let horizontal = !walls[idx(x - 1, y)] && !walls[idx(x + 1, y)];
            let vertical = !walls[idx(x, y - 1)] && !walls[idx(x, y + 1)];
            if horizontal ^ vertical {
                candidates.push(idx(x, y));
            }
        }
    }
    rng.shuffle(&mut candidates);
    let n = (candidates.len() as f64 * loop_fraction).round() as usize;
    for &c in &candidates[..n] {
        walls[c] = false;
    }
    walls
}

impl FactoredMaze {
    pub fn new(config: FactoredActionConfig) -> Result<Self> {
        config.validate()?;
        let walls = carve(config.size, config.layout_seed, config.loop_fraction);
        let n = config.size;
        let open = (0..n)
            .flat_map(|y| (0..n).map(move |x| (x, y)))
            .filter(|&(x, y)| !walls[y * n + x])
            .collect();
        let mut groups = vec![("proprio", 4), ("sensors", 5), ("goal", 3)];
        if config.last_action {
            groups.push(("last_action", config.num_actions()));
        }
        let spec = ObservationSpec::from_pairs(&groups, 1)?;
        Ok(Self {
            config,
            walls,
            open,
            spec,
            state: None,
        })
    }

    pub fn config(&self) -> &FactoredActionConfig {
        &self.config
    }

    pub fn is_wall(&self, x: i64, y: i64) -> bool {
        let n = self.config.size as i64;
        x < 0 || y < 0 || x >= n || y >= n || self.walls[(y * n + x) as usize]
    }

    pub fn open_cells(&self) -> &[(usize, usize)] {
        &self.open
    }

    pub fn position(&self) -> Option<((usize, usize), Heading)> {
        self.state.as_ref().map(|s| (s.pos, s.heading))
    }

    /// Places the agent explicitly; `pos` and `goal` must be open cells.
    pub fn place(&mut self, pos: (usize, usize), heading: Heading, goal: (usize, usize)) -> Result<Vec<f64>> {
        if !self.open.contains(&pos) || !self.open.contains(&goal) {
            return Err(Error::invalid("agent and goal must be on open cells"));
        }
        self.state = Some(MazeState {
            pos,
            heading,
            goal,
            t: 0,
            done: false,
            last_action: None,
        });
        Ok(self.observe())
    }

    fn observe(&self) -> Vec<f64> {
        let s = self.state.as_ref().expect("observe before reset");
        let (x, y) = (s.pos.0 as i64, s.pos.1 as i64);
        let f = s.heading.forward();
        let r = s.heading.right();
        let wall = |dx: i64, dy: i64| f64::from(u8::from(self.is_wall(x + dx, y + dy)));
        let mut obs = one_hot(s.heading.index(), 4);
        obs.push(wall(f.0, f.1));
        obs.push(wall(f.0 - r.0, f.1 - r.1));
        obs.push(wall(f.0 + r.0, f.1 + r.1));
        obs.push(wall(-r.0, -r.1));
        obs.push(wall(r.0, r.1));
        let gx = s.goal.0 as i64 - x;
        let gy = s.goal.1 as i64 - y;
        let scale = (self.config.size - 1) as f64;
        let ahead = gx * f.0 + gy * f.1;
        let side = gx * r.0 + gy * r.1;
        let in_sight = ahead > 0 && side == 0 && (1..ahead).all(|k| !self.is_wall(x + k * f.0, y + k * f.1));
        if !self.config.line_of_sight || in_sight {
            obs.push(1.0);
            obs.push(ahead as f64 / scale);
            obs.push(side as f64 / scale);
        } else {
            obs.extend([0.0; 3]);
        }
        if self.config.last_action {
            obs.extend(one_hot(s.last_action.unwrap_or(usize::MAX), self.config.num_actions()));
        }
        obs
    }
}

impl Environment for FactoredMaze {
    fn name(&self) -> &'static str {
        "factored_maze"
    }

    fn observation_spec(&self) -> &ObservationSpec {
        &self.spec
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.config.num_actions())
    }

    fn time_limit(&self) -> usize {
        self.config.episode_length
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let pos = self.open[rng.below(self.open.len())];
        let goal = loop {
            let g = self.open[rng.below(self.open.len())];
            if g != pos {
                break g;
            }
        };
        let heading = Heading::from_index(rng.below(4));
        self.place(pos, heading, goal).expect("open cells")
    }

    fn step(&mut self, action: &Action, _rng: &mut Rng) -> Result<StepOutcome> {
        let n = self.config.num_actions();
        let a = match action {
            Action::Discrete(a) if *a < n => *a,
            _ => return Err(Error::invalid(format!("maze action must be in 0..{n}, got {action:?}"))),
        };
        let s = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Contract("step before reset".into()))?;
        if s.done {
            return Err(Error::Contract("stepping a finished episode".into()));
        }
        let e = self.config.effect(a);
        let f = s.heading.forward();
        let r = s.heading.right();
        let dx = e.forward * f.0 + e.right * r.0;
        let dy = e.forward * f.1 + e.right * r.1;
        let (x, y) = (s.pos.0 as i64 + dx, s.pos.1 as i64 + dy);
        let pos = if (dx, dy) != (0, 0) && !self.is_wall(x, y) {
            (x as usize, y as usize)
        } else {
            s.pos
        };
        let heading = s.heading.turned(e.turn);
        let reached = pos == s.goal;
        let limit = self.config.episode_length;
        let reward = if reached { self.config.goal_reward } else { 0.0 };
        let s = self.state.as_mut().expect("checked");
        s.pos = pos;
        s.heading = heading;
        s.t += 1;
        s.last_action = Some(a);
        s.done = reached || s.t >= limit;
        let done = s.done;
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done,
            on_target: reached,
        })
    }

    fn elapsed(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.t)
    }
}
