//! History features and the split into what the default policy may see
//! (`x_D`) and what only the agent sees (`x_G`).
//!
//! A step observation is a concatenation of named feature groups. The
//! history fed to the networks is the last `window` step observations,
//! oldest first, zero-padded at episode start.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSpec {
    groups: Vec<FeatureGroup>,
    window: usize,
}

impl ObservationSpec {
    pub fn new(groups: Vec<FeatureGroup>, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::config("window", "history window must be at least 1"));
        }
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|h| h.name == g.name) {
                return Err(Error::config("observation", format!("duplicate feature group `{}`", g.name)));
            }
        }
        Ok(Self { groups, window })
    }

    /// Convenience constructor from `(name, len)` pairs.
    pub fn from_pairs(pairs: &[(&str, usize)], window: usize) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(n, l)| FeatureGroup {
                    name: (*n).to_string(),
                    len: *l,
                })
                .collect(),
            window,
        )
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn with_window(&self, window: usize) -> Result<Self> {
        Self::new(self.groups.clone(), window)
    }

    pub fn step_len(&self) -> usize {
        self.groups.iter().map(|g| g.len).sum()
    }

    pub fn total_len(&self) -> usize {
        self.step_len() * self.window
    }

    pub fn has_group(&self, name: &str) -> bool {
        self.groups.iter().any(|g| g.name == name)
    }

    /// Offset of `name` inside one step observation.
    pub fn group_offset(&self, name: &str) -> Option<(usize, usize)> {
        let mut off = 0;
        for g in &self.groups {
            if g.name == name {
                return Some((off, g.len));
            }
            off += g.len;
        }
        None
    }
}

/// Which feature groups the default policy may see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSpec {
    Preset(MaskPreset),
    /// Explicit list of visible group names.
    Groups(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPreset {
    /// Only the `proprio` group.
    ProprioOnly,
    FullInformation,
    /// No input at all: the default policy is an unconditional distribution.
    Nothing,
    /// Only the `last_action` group.
    LastActionOnly,
}

impl MaskSpec {
    pub const PROPRIO_ONLY: MaskSpec = MaskSpec::Preset(MaskPreset::ProprioOnly);
    pub const FULL_INFORMATION: MaskSpec = MaskSpec::Preset(MaskPreset::FullInformation);
    pub const NOTHING: MaskSpec = MaskSpec::Preset(MaskPreset::Nothing);
    pub const LAST_ACTION_ONLY: MaskSpec = MaskSpec::Preset(MaskPreset::LastActionOnly);

    pub fn task_subset<S: AsRef<str>>(groups: &[S]) -> Self {
        MaskSpec::Groups(groups.iter().map(|g| g.as_ref().to_string()).collect())
    }

    /// Visibility flag per group of `spec`.
    pub fn resolve(&self, spec: &ObservationSpec) -> Result<Vec<bool>> {
        let named = |names: &[&str]| -> Result<Vec<bool>> {
            for n in names {
                if !spec.has_group(n) {
                    return Err(Error::config("mask", format!("unknown feature group `{n}`")));
                }
            }
            Ok(spec.groups().iter().map(|g| names.contains(&g.name.as_str())).collect())
        };
        match self {
            MaskSpec::Preset(MaskPreset::FullInformation) => Ok(vec![true; spec.groups().len()]),
            MaskSpec::Preset(MaskPreset::Nothing) => Ok(vec![false; spec.groups().len()]),
            MaskSpec::Preset(MaskPreset::ProprioOnly) => named(&["proprio"]),
            MaskSpec::Preset(MaskPreset::LastActionOnly) => named(&["last_action"]),
            MaskSpec::Groups(names) => {
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                named(&refs)
            }
        }
    }

    pub fn index(&self, spec: &ObservationSpec) -> Result<MaskIndex> {
        MaskIndex::new(spec, self)
    }
}

/// Precomputed feature positions of `x_D` and `x_G` within a history vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskIndex {
    total: usize,
    default_idx: Vec<usize>,
    goal_idx: Vec<usize>,
}

impl MaskIndex {
    pub fn new(spec: &ObservationSpec, mask: &MaskSpec) -> Result<Self> {
        let visible = mask.resolve(spec)?;
        let mut default_idx = Vec::new();
        let mut goal_idx = Vec::new();
        let step = spec.step_len();
        for slot in 0..spec.window() {
            let mut off = slot * step;
            for (g, vis) in spec.groups().iter().zip(&visible) {
                let range = off..off + g.len;
                if *vis {
                    default_idx.extend(range);
                } else {
                    goal_idx.extend(range);
                }
                off += g.len;
            }
        }
        Ok(Self {
            total: spec.total_len(),
            default_idx,
            goal_idx,
        })
    }

    pub fn default_len(&self) -> usize {
        self.default_idx.len()
    }

    pub fn goal_len(&self) -> usize {
        self.goal_idx.len()
    }

    pub fn default_features(&self, obs: &[f64]) -> Vec<f64> {
        self.default_idx.iter().map(|&i| obs[i]).collect()
    }

    pub fn split(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("history features", obs.len(), self.total)?;
        Ok((
            self.default_features(obs),
            self.goal_idx.iter().map(|&i| obs[i]).collect(),
        ))
    }

    /// Inverse of [`MaskIndex::split`].
    pub fn merge(&self, x_d: &[f64], x_g: &[f64]) -> Result<Vec<f64>> {
        check_len("x_D", x_d.len(), self.default_idx.len())?;
        check_len("x_G", x_g.len(), self.goal_idx.len())?;
        let mut out = vec![0.0; self.total];
        for (&i, &v) in self.default_idx.iter().zip(x_d) {
            out[i] = v;
        }
        for (&i, &v) in self.goal_idx.iter().zip(x_g) {
            out[i] = v;
        }
        Ok(out)
    }
}

/// Splits `obs` into `(x_D, x_G)`.
pub fn split(obs: &HistoryFeatures, spec: &ObservationSpec, mask: &MaskSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    MaskIndex::new(spec, mask)?.split(obs.as_slice())
}

/// Concatenated features of the last `window` steps, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFeatures(Vec<f64>);

impl HistoryFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Rolling window that turns per-step observations into [`HistoryFeatures`].
#[derive(Debug, Clone)]
pub struct HistoryEncoder {
    step_len: usize,
    window: usize,
    slots: VecDeque<Vec<f64>>,
}

impl HistoryEncoder {
    pub fn new(spec: &ObservationSpec) -> Self {
        let mut enc = Self {
            step_len: spec.step_len(),
            window: spec.window(),
            slots: VecDeque::new(),
        };
        enc.reset();
        enc
    }

    /// Clears history; all slots become zero padding.
    pub fn reset(&mut self) {
        self.slots = (0..self.window).map(|_| vec![0.0; self.step_len]).collect();
    }

    pub fn encode(&mut self, step_obs: &[f64]) -> Result<HistoryFeatures> {
        check_len("step observation", step_obs.len(), self.step_len)?;
        self.slots.pop_front();
        self.slots.push_back(step_obs.to_vec());
        Ok(HistoryFeatures(self.slots.iter().flatten().copied().collect()))
    }
}

pub fn one_hot(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    if index < n {
        v[index] = 1.0;
    }
    v
}

/// Grid coordinate `x ∈ 0..size` scaled to `[−1, 1]`.
pub fn normalize_cell(x: usize, size: usize) -> f64 {
    if size <= 1 {
        0.0
    } else {
        2.0 * x as f64 / (size - 1) as f64 - 1.0
    }
}
