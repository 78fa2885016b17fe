use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MetaController, MetaError, MetaParams, SelectMode, SystemKind};
use crate::controller::{argmax, sample_index};
use crate::env::EnvState;
use crate::neural::{
    bptt_policy_gradient, load_checkpoint, save_checkpoint, softmax, Direction, EpisodeTape, FeedforwardPolicy,
    Optimizer, RecurrentPolicy, TapeEntry,
};

/// `G_t = Σ_{i≥0} γ^i R_{t+i}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Recurrent REINFORCE: a GRU reads one state per meta decision and a
/// softmax head picks the goal.
#[derive(Clone, Debug)]
pub struct RhReinforce {
    pub policy: RecurrentPolicy,
    gamma: f64,
    opt: Optimizer,
    rng: ChaCha8Rng,
    num_goals: usize,
    hidden: Vec<f64>,
    tape: EpisodeTape,
    rewards: Vec<f64>,
}

impl RhReinforce {
    pub fn new(num_states: usize, num_goals: usize, params: &MetaParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = RecurrentPolicy::new(num_states, params.gru_units, num_goals, &mut rng);
        RhReinforce {
            hidden: policy.initial_state(),
            policy,
            gamma: params.gamma,
            opt: Optimizer::adam(params.learning_rate),
            rng,
            num_goals,
            tape: EpisodeTape::default(),
            rewards: Vec::new(),
        }
    }

    pub fn tape(&self) -> &EpisodeTape {
        &self.tape
    }

    /// Goal logits after reading `history` (oldest first) from a fresh state.
    pub fn logits(&self, history: &[EnvState]) -> Result<Vec<f64>, MetaError> {
        let mut h = self.policy.initial_state();
        let mut logits = Err(MetaError::EmptyHistory);
        for s in history {
            let (nh, l) = self.policy.step(&s.observation, &h)?;
            h = nh;
            logits = Ok(l);
        }
        logits
    }
}

impl MetaController for RhReinforce {
    fn kind(&self) -> SystemKind {
        SystemKind::RhReinforce
    }

    fn begin_episode(&mut self) {
        self.hidden = self.policy.initial_state();
        self.tape = EpisodeTape::default();
        self.rewards.clear();
    }

    fn select_goal(&mut self, state: &EnvState, mode: SelectMode) -> Result<usize, MetaError> {
        if mode == SelectMode::Explore {
            return Ok(self.rng.random_range(0..self.num_goals));
        }
        let (h, logits) = self.policy.step(&state.observation, &self.hidden)?;
        let goal = sample_index(&softmax(&logits), &mut self.rng);
        self.tape.entries.push(TapeEntry {
            input: state.observation.clone(),
            hidden: std::mem::replace(&mut self.hidden, h),
            logits,
            choice: goal,
        });
        Ok(goal)
    }

    fn record(&mut self, reward: f64, _next: &EnvState, _done: bool) -> Result<(), MetaError> {
        if self.rewards.len() < self.tape.len() {
            self.rewards.push(reward);
        }
        Ok(())
    }

    fn end_episode(&mut self, learn: bool) -> Result<(), MetaError> {
        if !learn || self.tape.is_empty() {
            return Ok(());
        }
        let returns = discounted_returns(&self.rewards, self.gamma);
        if returns.iter().all(|g| *g == 0.0) {
            return Ok(());
        }
        let grad = bptt_policy_gradient(&self.policy, &self.tape, &returns)?;
        self.opt.apply(&mut self.policy, &grad, Direction::Ascend)?;
        Ok(())
    }

    fn greedy_goal(&self, history: &[EnvState]) -> Result<usize, MetaError> {
        Ok(argmax(&self.logits(history)?))
    }

    fn save(&self) -> String {
        save_checkpoint(&self.policy)
    }

    fn load(&mut self, text: &str) -> Result<(), MetaError> {
        Ok(load_checkpoint(&mut self.policy, text)?)
    }
}

/// Feedforward REINFORCE: the goal depends on the current state only.
#[derive(Clone, Debug)]
pub struct HReinforce {
    pub policy: FeedforwardPolicy,
    gamma: f64,
    opt: Optimizer,
    rng: ChaCha8Rng,
    num_goals: usize,
    inputs: Vec<Vec<f64>>,
    choices: Vec<usize>,
    rewards: Vec<f64>,
}

impl HReinforce {
    pub fn new(num_states: usize, num_goals: usize, params: &MetaParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HReinforce {
            policy: FeedforwardPolicy::new(num_states, num_goals, &mut rng),
            gamma: params.gamma,
            opt: Optimizer::adam(params.learning_rate),
            rng,
            num_goals,
            inputs: Vec::new(),
            choices: Vec::new(),
            rewards: Vec::new(),
        }
    }
}

impl MetaController for HReinforce {
    fn kind(&self) -> SystemKind {
        SystemKind::HReinforce
    }

    fn begin_episode(&mut self) {
        self.inputs.clear();
        self.choices.clear();
        self.rewards.clear();
    }

    fn select_goal(&mut self, state: &EnvState, mode: SelectMode) -> Result<usize, MetaError> {
        if mode == SelectMode::Explore {
            return Ok(self.rng.random_range(0..self.num_goals));
        }
        let probs = self.policy.probs(&state.observation)?;
        let goal = sample_index(&probs, &mut self.rng);
        self.inputs.push(state.observation.clone());
        self.choices.push(goal);
        Ok(goal)
    }

    fn record(&mut self, reward: f64, _next: &EnvState, _done: bool) -> Result<(), MetaError> {
        if self.rewards.len() < self.choices.len() {
            self.rewards.push(reward);
        }
        Ok(())
    }

    fn end_episode(&mut self, learn: bool) -> Result<(), MetaError> {
        if !learn || self.choices.is_empty() {
            return Ok(());
        }
        let returns = discounted_returns(&self.rewards, self.gamma);
        if returns.iter().all(|g| *g == 0.0) {
            return Ok(());
        }
        let grad = self.policy.policy_gradient(&self.inputs, &self.choices, &returns)?;
        self.opt.apply(&mut self.policy, &grad, Direction::Ascend)?;
        Ok(())
    }

    fn greedy_goal(&self, history: &[EnvState]) -> Result<usize, MetaError> {
        let last = history.last().ok_or(MetaError::EmptyHistory)?;
        Ok(argmax(&self.policy.probs(&last.observation)?))
    }

    fn save(&self) -> String {
        save_checkpoint(&self.policy)
    }

    fn load(&mut self, text: &str) -> Result<(), MetaError> {
        Ok(load_checkpoint(&mut self.policy, text)?)
    }
}
