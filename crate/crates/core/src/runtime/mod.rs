//! Actor-learner orchestration: replay, parameter snapshots, the training
//! loop, evaluation, logs and checkpoints.

mod actor;
mod config;
mod replay;
mod run;

pub use actor::{evaluate_policy, run_actor, Actor, ActorOutput, EpisodeRecord, ParamSnapshot, Snapshot};
pub use config::{EnvSection, ExperimentConfig, PretrainedDefault, Setup};
pub use replay::ReplayBuffer;
pub use run::{load_nets, median, run_learner, save_nets, transfer_run, LogRow, RunOutput, CSV_HEADER};
