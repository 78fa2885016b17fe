use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MetaController, MetaError, MetaParams, SelectMode, SystemKind};
use crate::controller::argmax;
use crate::env::EnvState;
use crate::neural::{
    huber_loss, load_checkpoint, save_checkpoint, zeros_like, Activation, Direction, Mlp, Optimizer, Parameterized,
};

/// Linear decay from `start` to `end` over `decay_steps`, then constant.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
    steps: u64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, decay_steps: u64) -> Self {
        EpsilonSchedule {
            start,
            end,
            decay_steps,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn value_at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }

    pub fn value(&self) -> f64 {
        self.value_at(self.steps)
    }

    /// Current ε, then advances by one step.
    pub fn advance(&mut self) -> f64 {
        let v = self.value();
        self.steps += 1;
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub goal: usize,
    pub reward: f64,
    pub next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO replay memory with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `n` entries drawn uniformly with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

/// Q-learning meta controller with experience replay and a soft-updated
/// target network.
#[derive(Clone, Debug)]
pub struct HDqn {
    pub q: Mlp,
    pub target: Mlp,
    pub buffer: ReplayBuffer,
    pub epsilon: EpsilonSchedule,
    gamma: f64,
    batch_size: usize,
    tau: f64,
    opt: Optimizer,
    rng: ChaCha8Rng,
    num_goals: usize,
    pending: Option<(Vec<f64>, usize)>,
}

impl HDqn {
    pub fn new(num_states: usize, num_goals: usize, params: &MetaParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Mlp::new(&[num_states, 16, 32, num_goals], Activation::Linear, &mut rng);
        HDqn {
            target: q.clone(),
            q,
            buffer: ReplayBuffer::new(params.replay_size),
            epsilon: EpsilonSchedule::new(params.epsilon_start, params.epsilon_end, params.epsilon_decay_steps),
            gamma: params.gamma,
            batch_size: params.batch_size,
            tau: params.target_update_rate,
            opt: Optimizer::rmsprop(params.learning_rate),
            rng,
            num_goals,
            pending: None,
        }
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>, MetaError> {
        Ok(self.q.forward(state)?)
    }

    /// Regression target for one transition.
    pub fn td_target(&self, t: &Transition) -> Result<f64, MetaError> {
        if t.done {
            return Ok(t.reward);
        }
        let next = self.target.forward(&t.next)?;
        Ok(t.reward + self.gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// One minibatch step on the Huber loss, then the soft target update.
    pub fn train_step(&mut self) -> Result<(), MetaError> {
        if self.buffer.len() < self.batch_size {
            return Ok(());
        }
        let mut rng = self.rng.clone();
        let batch: Vec<Transition> = self
            .buffer
            .sample(self.batch_size, &mut rng)
            .into_iter()
            .cloned()
            .collect();
        self.rng = rng;
        let mut grad = zeros_like(&self.q);
        let scale = 1.0 / batch.len() as f64;
        for t in &batch {
            let y = self.td_target(t)?;
            let cache = self.q.forward_cached(&t.state)?;
            let (_, dl) = huber_loss(Mlp::output(&cache)[t.goal], y, 1.0);
            let mut dout = vec![0.0; self.num_goals];
            dout[t.goal] = dl * scale;
            self.q.backward(&cache, &dout, &mut grad);
        }
        self.opt.apply(&mut self.q, &grad, Direction::Descend)?;
        let q = self.q.flatten();
        let mut target = self.target.flatten();
        for (t, v) in target.iter_mut().zip(q) {
            *t += self.tau * (v - *t);
        }
        self.target.set_flat(&target);
        Ok(())
    }

    /// Batch-mean Huber loss against the current targets, for diagnostics.
    pub fn loss(&self, batch: &[Transition]) -> Result<f64, MetaError> {
        let mut total = 0.0;
        for t in batch {
            let y = self.td_target(t)?;
            total += huber_loss(self.q.forward(&t.state)?[t.goal], y, 1.0).0;
        }
        Ok(total / batch.len().max(1) as f64)
    }
}

impl MetaController for HDqn {
    fn kind(&self) -> SystemKind {
        SystemKind::HDqn
    }

    fn begin_episode(&mut self) {
        self.pending = None;
    }

    fn select_goal(&mut self, state: &EnvState, mode: SelectMode) -> Result<usize, MetaError> {
        let eps = match mode {
            SelectMode::Explore => 1.0,
            SelectMode::Train => self.epsilon.advance(),
        };
        let goal = if self.rng.random::<f64>() < eps {
            self.rng.random_range(0..self.num_goals)
        } else {
            argmax(&self.q_values(&state.observation)?)
        };
        self.pending = Some((state.observation.clone(), goal));
        Ok(goal)
    }

    fn record(&mut self, reward: f64, next: &EnvState, done: bool) -> Result<(), MetaError> {
        if let Some((state, goal)) = self.pending.take() {
            self.buffer.push(Transition {
                state,
                goal,
                reward,
                next: next.observation.clone(),
                done,
            });
            self.train_step()?;
        }
        Ok(())
    }

    fn end_episode(&mut self, _learn: bool) -> Result<(), MetaError> {
        Ok(())
    }

    fn greedy_goal(&self, history: &[EnvState]) -> Result<usize, MetaError> {
        let last = history.last().ok_or(MetaError::EmptyHistory)?;
        Ok(argmax(&self.q_values(&last.observation)?))
    }

    fn save(&self) -> String {
        save_checkpoint(&self.q)
    }

    fn load(&mut self, text: &str) -> Result<(), MetaError> {
        load_checkpoint(&mut self.q, text)?;
        self.target = self.q.clone();
        Ok(())
    }
}
