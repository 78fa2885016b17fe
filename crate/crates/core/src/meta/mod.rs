//! Meta controllers: the goal-selecting level of the hierarchy.

mod dqn;
mod policy_map;
mod reinforce;

pub use dqn::{EpsilonSchedule, HDqn, ReplayBuffer, Transition};
pub use policy_map::{controller_behaviors, deterministic_policy_map, symbol_table, PolicyMapError, StateIndex};
pub use reinforce::{discounted_returns, HReinforce, RhReinforce};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvSpec, EnvState};
use crate::neural::{CheckpointError, NeuralError, DEFAULT_LR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    RhReinforce,
    HReinforce,
    HDqn,
}

impl SystemKind {
    pub const ALL: [SystemKind; 3] = [SystemKind::RhReinforce, SystemKind::HReinforce, SystemKind::HDqn];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::RhReinforce => "rh-reinforce",
            SystemKind::HReinforce => "h-reinforce",
            SystemKind::HDqn => "h-dqn",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self == SystemKind::RhReinforce
    }

    pub fn is_reinforce(self) -> bool {
        self != SystemKind::HDqn
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown system `{s}`"))
    }
}

/// Hyperparameters shared by the meta controllers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaParams {
    pub learning_rate: f64,
    /// Discount over meta decisions.
    pub gamma: f64,
    pub gru_units: usize,
    pub replay_size: usize,
    pub batch_size: usize,
    pub target_update_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Meta decisions over which ε decays linearly.
    pub epsilon_decay_steps: u64,
}

impl Default for MetaParams {
    fn default() -> Self {
        MetaParams {
            learning_rate: DEFAULT_LR,
            gamma: 1.0,
            gru_units: 64,
            replay_size: 100_000,
            batch_size: 64,
            target_update_rate: 0.001,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_steps: 15_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetaError {
    #[error("meta update: {0}")]
    Numeric(#[from] NeuralError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("empty history")]
    EmptyHistory,
}

/// How a goal is chosen at a meta step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectMode {
    /// Sample from the learned policy and remember the choice for learning.
    Train,
    /// Uniform random goal; nothing is recorded.
    Explore,
}

pub trait MetaController: Send {
    fn kind(&self) -> SystemKind;

    /// Clears the per-episode memory.
    fn begin_episode(&mut self);

    /// Picks a goal for the newest state of the episode.
    fn select_goal(&mut self, state: &EnvState, mode: SelectMode) -> Result<usize, MetaError>;

    /// Outcome of the most recent goal: accumulated reward, the state the
    /// controller returned in, and whether the episode ended.
    fn record(&mut self, reward: f64, next: &EnvState, done: bool) -> Result<(), MetaError>;

    /// End-of-episode learning.
    fn end_episode(&mut self, learn: bool) -> Result<(), MetaError>;

    /// Deterministic goal for a state history, oldest first.
    fn greedy_goal(&self, history: &[EnvState]) -> Result<usize, MetaError>;

    fn save(&self) -> String;

    fn load(&mut self, text: &str) -> Result<(), MetaError>;
}

pub fn make_meta(kind: SystemKind, spec: &EnvSpec, params: &MetaParams, seed: u64) -> Box<dyn MetaController> {
    let (s, g) = (spec.num_states(), spec.num_goals());
    match kind {
        SystemKind::RhReinforce => Box::new(RhReinforce::new(s, g, params, seed)),
        SystemKind::HReinforce => Box::new(HReinforce::new(s, g, params, seed)),
        SystemKind::HDqn => Box::new(HDqn::new(s, g, params, seed)),
    }
}
