//! Desk-scale environments and exact tabular enumerations.

mod gridnav;
mod maze;
mod point_mass;
mod registry;
mod tabular;

pub use gridnav::{GridAction, GridKey, GridNav, GridNavConfig, GridNavTabular, RewardMode, TaskVariant};
pub use maze::{AxisSpec, FactoredActionConfig, FactoredMaze, Heading};
pub use point_mass::{PointMass, PointMassConfig};
pub use registry::{EnvFactory, EnvRegistry};
pub use tabular::{TabularMdp, MAX_TABULAR_STATES};

use crate::distributions::{Action, ActionSpace};
use crate::error::Result;
use crate::numerics::Rng;
use crate::observation::ObservationSpec;

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Whether the agent is on its commanded target after this step.
    pub on_target: bool,
}

/// A resettable episodic environment owned by one actor.
///
/// Observations are single-step feature vectors laid out per
/// [`Environment::observation_spec`] (whose window is 1); history windowing
/// happens in the caller.
pub trait Environment: Send {
    fn name(&self) -> &'static str;
    fn observation_spec(&self) -> &ObservationSpec;
    fn action_space(&self) -> ActionSpace;
    fn time_limit(&self) -> usize;
    /// Starts a new episode and returns the first observation.
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    /// Advances one step. Stepping a finished episode is a contract violation.
    fn step(&mut self, action: &Action, rng: &mut Rng) -> Result<StepOutcome>;
    /// Steps taken in the current episode.
    fn elapsed(&self) -> usize;
}
