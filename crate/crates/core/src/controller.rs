//! Goal-conditioned controllers.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Cell, EnvError, EnvSpec, EnvState, Environment};
use crate::neural::{
    load_checkpoint, save_checkpoint, zeros_like, Activation, CheckpointError, Direction, FeedforwardPolicy, Mlp,
    NeuralError, Optimizer, Parameterized,
};

pub const CONTROLLER_GAMMA: f64 = 0.9;
pub const INTRINSIC_REWARD: f64 = 1.0;

/// A goal is achieved by arriving at its target: the step must end in the
/// target and start somewhere else. In the corridor this makes `g6` require
/// the `s5 → s6` move, since a right move at `s6` goes nowhere.
pub fn goal_achieved(target: Cell, prev: Cell, next: Cell) -> bool {
    next == target && prev != next
}

/// One-hot goal vector of length `num_goals`.
pub fn goal_encoding(num_goals: usize, goal: usize) -> Vec<f64> {
    let mut v = vec![0.0; num_goals];
    v[goal] = 1.0;
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    #[default]
    Optimal,
    Learned,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Optimal => "optimal",
            ControllerKind::Learned => "learned",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(ControllerKind::Optimal),
            "learned" => Ok(ControllerKind::Learned),
            _ => Err(format!("unknown controller `{s}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("goal {goal} is unreachable from {state}")]
    Unreachable { state: String, goal: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("controller update: {0}")]
    Numeric(#[from] NeuralError),
    #[error("controller checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutcomeKind {
    GoalReached { final_state: Cell },
    Terminated,
    Truncated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerOutcome {
    pub kind: OutcomeKind,
    /// External reward accumulated while pursuing the goal.
    pub reward: f64,
    pub actions: usize,
}

/// One primitive step as seen by a learning controller.
#[derive(Clone, Debug)]
pub struct Transition<'a> {
    pub state: &'a EnvState,
    pub goal: usize,
    pub action: Action,
    pub next: &'a EnvState,
    pub intrinsic: f64,
    /// The sub-task ended: the goal was reached or the episode is over.
    pub end: bool,
}

pub trait Controller: Send {
    fn act(&mut self, state: &EnvState, goal: usize) -> Result<Action, ControllerError>;

    /// Learning hook called after every primitive step.
    fn learn(&mut self, _transition: &Transition<'_>) -> Result<(), ControllerError> {
        Ok(())
    }

    /// Greedy action, used when reading off deterministic behavior.
    fn greedy(&self, state: &EnvState, goal: usize) -> Result<Action, ControllerError>;

    /// Parameters that determine greedy behavior, if the controller has any.
    fn save(&self) -> Option<String> {
        None
    }

    fn load(&mut self, _text: &str) -> Result<(), ControllerError> {
        Ok(())
    }
}

/// Pursues `goal` until it is achieved, the episode terminates or the step
/// budget runs out. Termination takes precedence over goal achievement.
pub fn run_controller(
    controller: &mut dyn Controller,
    env: &mut dyn Environment,
    goal: usize,
) -> Result<ControllerOutcome, ControllerError> {
    let target = env.spec().goals[goal].target;
    let mut reward = 0.0;
    let mut actions = 0;
    loop {
        let state = env.spec().observe(env.current());
        let action = controller.act(&state, goal)?;
        let out = env.step(action)?;
        actions += 1;
        reward += out.reward;
        let achieved = goal_achieved(target, state.id, out.next_state.id);
        controller.learn(&Transition {
            state: &state,
            goal,
            action,
            next: &out.next_state,
            intrinsic: if achieved { INTRINSIC_REWARD } else { 0.0 },
            end: achieved || out.done,
        })?;
        let kind = if out.done && !out.truncated {
            OutcomeKind::Terminated
        } else if out.truncated {
            OutcomeKind::Truncated
        } else if achieved {
            OutcomeKind::GoalReached {
                final_state: out.next_state.id,
            }
        } else {
            continue;
        };
        return Ok(ControllerOutcome { kind, reward, actions });
    }
}

/// Shortest-path controller on the environment's intended transitions.
///
/// For every `(cell, goal)` it stores the first action of a shortest action
/// sequence whose last move achieves the goal. Ties go to the lower action
/// index. In the stochastic corridor it issues the move whose intended
/// direction follows that path.
#[derive(Clone, Debug)]
pub struct OptimalController {
    spec: EnvSpec,
    /// `plan[cell][goal] = (first action, distance)`.
    plan: Vec<Vec<Option<(Action, usize)>>>,
}

impl OptimalController {
    pub fn new(spec: &EnvSpec) -> Self {
        let plan = (0..spec.num_states())
            .map(|c| {
                (0..spec.num_goals())
                    .map(|g| shortest_plan(spec, Cell(c), spec.goals[g].target))
                    .collect()
            })
            .collect();
        OptimalController {
            spec: spec.clone(),
            plan,
        }
    }

    /// Number of actions the controller needs from `cell`, if reachable.
    pub fn distance(&self, cell: Cell, goal: usize) -> Option<usize> {
        self.plan[cell.0][goal].map(|(_, d)| d)
    }

    pub fn action(&self, cell: Cell, goal: usize) -> Result<Action, ControllerError> {
        self.plan[cell.0][goal]
            .map(|(a, _)| a)
            .ok_or_else(|| ControllerError::Unreachable {
                state: self.spec.state_names[cell.0].clone(),
                goal: self.spec.goals[goal].name.clone(),
            })
    }

    /// Cells visited when following the plan on intended transitions,
    /// starting cell included.
    pub fn path(&self, cell: Cell, goal: usize) -> Result<Vec<Cell>, ControllerError> {
        let target = self.spec.goals[goal].target;
        let mut path = vec![cell];
        let mut cur = cell;
        loop {
            let next = self.spec.intended_next(cur, self.action(cur, goal)?);
            path.push(next);
            if goal_achieved(target, cur, next) || next == self.spec.terminal {
                return Ok(path);
            }
            cur = next;
        }
    }
}

/// BFS over cells, expanding actions in index order.
fn shortest_plan(spec: &EnvSpec, from: Cell, target: Cell) -> Option<(Action, usize)> {
    if from == spec.terminal {
        return None;
    }
    let mut first: Vec<Option<Action>> = vec![None; spec.num_states()];
    let mut dist = vec![usize::MAX; spec.num_states()];
    dist[from.0] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for a in (0..spec.num_actions()).map(Action) {
            let v = spec.intended_next(u, a);
            let head = first[u.0].unwrap_or(a);
            if goal_achieved(target, u, v) {
                return Some((head, dist[u.0] + 1));
            }
            if dist[v.0] == usize::MAX && v != spec.terminal {
                dist[v.0] = dist[u.0] + 1;
                first[v.0] = Some(head);
                queue.push_back(v);
            }
        }
    }
    None
}

impl Controller for OptimalController {
    fn act(&mut self, state: &EnvState, goal: usize) -> Result<Action, ControllerError> {
        self.action(state.id, goal)
    }

    fn greedy(&self, state: &EnvState, goal: usize) -> Result<Action, ControllerError> {
        self.action(state.id, goal)
    }
}

/// Per-step quantities of an actor-critic update.
#[derive(Clone, Debug)]
pub struct ActorCriticGrads {
    pub delta: f64,
    /// `δ ∇ ln π(a | s, g)`, to be ascended.
    pub actor: FeedforwardPolicy,
    /// Gradient of `½ δ²` w.r.t. the critic with `v(s')` held fixed,
    /// `-δ ∇ v(s, g)`, to be descended.
    pub critic: Mlp,
}

/// Goal-conditioned actor-critic trained online on the intrinsic reward.
#[derive(Clone, Debug)]
pub struct ActorCritic {
    pub actor: FeedforwardPolicy,
    pub critic: Mlp,
    pub gamma: f64,
    num_states: usize,
    num_goals: usize,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    rng: ChaCha8Rng,
}

impl ActorCritic {
    pub fn new(spec: &EnvSpec, lr: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = spec.num_states() + spec.num_goals();
        ActorCritic {
            actor: FeedforwardPolicy::new(inputs, spec.num_actions(), &mut rng),
            critic: Mlp::new(&[inputs, 16, 32, 1], Activation::Linear, &mut rng),
            gamma: CONTROLLER_GAMMA,
            num_states: spec.num_states(),
            num_goals: spec.num_goals(),
            actor_opt: Optimizer::adam(lr),
            critic_opt: Optimizer::adam(lr),
            rng,
        }
    }

    pub fn input(&self, state: &EnvState, goal: usize) -> Vec<f64> {
        debug_assert_eq!(state.observation.len(), self.num_states);
        let mut x = state.observation.clone();
        x.extend(goal_encoding(self.num_goals, goal));
        x
    }

    pub fn value(&self, state: &EnvState, goal: usize) -> Result<f64, NeuralError> {
        Ok(self.critic.forward(&self.input(state, goal))?[0])
    }

    /// TD error and both gradients for one transition. `v(s')` is zero when
    /// the sub-task ended.
    pub fn gradients(&self, t: &Transition<'_>) -> Result<ActorCriticGrads, NeuralError> {
        let x = self.input(t.state, t.goal);
        let cache = self.critic.forward_cached(&x)?;
        let v = Mlp::output(&cache)[0];
        let v_next = if t.end { 0.0 } else { self.value(t.next, t.goal)? };
        let delta = t.intrinsic + self.gamma * v_next - v;
        if !delta.is_finite() {
            return Err(NeuralError::NonFinite("TD error"));
        }
        let mut actor = zeros_like(&self.actor);
        self.actor.accumulate_log_prob_grad(&x, t.action.0, delta, &mut actor)?;
        let mut critic = zeros_like(&self.critic);
        self.critic.backward(&cache, &[-delta], &mut critic);
        Ok(ActorCriticGrads { delta, actor, critic })
    }
}

impl Controller for ActorCritic {
    fn act(&mut self, state: &EnvState, goal: usize) -> Result<Action, ControllerError> {
        let probs = self.actor.probs(&self.input(state, goal))?;
        Ok(Action(sample_index(&probs, &mut self.rng)))
    }

    fn learn(&mut self, t: &Transition<'_>) -> Result<(), ControllerError> {
        let g = self.gradients(t)?;
        self.actor_opt.apply(&mut self.actor, &g.actor, Direction::Ascend)?;
        self.critic_opt.apply(&mut self.critic, &g.critic, Direction::Descend)?;
        if !self.actor.all_finite() || !self.critic.all_finite() {
            return Err(NeuralError::NonFinite("controller parameters").into());
        }
        Ok(())
    }

    fn greedy(&self, state: &EnvState, goal: usize) -> Result<Action, ControllerError> {
        let probs = self.actor.probs(&self.input(state, goal))?;
        Ok(Action(argmax(&probs)))
    }

    fn save(&self) -> Option<String> {
        Some(save_checkpoint(&self.actor))
    }

    fn load(&mut self, text: &str) -> Result<(), ControllerError> {
        Ok(load_checkpoint(&mut self.actor, text)?)
    }
}

/// Categorical sample from a probability vector.
pub fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn make_controller(kind: ControllerKind, spec: &EnvSpec, lr: f64, seed: u64) -> Box<dyn Controller> {
    match kind {
        ControllerKind::Optimal => Box::new(OptimalController::new(spec)),
        ControllerKind::Learned => Box::new(ActorCritic::new(spec, lr, seed)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_env, EnvKind, Grid, GRID_LANDMARKS, GRID_START};

    fn goal_index(spec: &EnvSpec, name: &str) -> usize {
        spec.goals.iter().position(|g| g.name == name).unwrap()
    }

    #[test]
    fn corridor_goal_predicate() {
        assert!(goal_achieved(Cell(6), Cell(5), Cell(6)));
        assert!(!goal_achieved(Cell(6), Cell(6), Cell(6)));
        assert!(goal_achieved(Cell(4), Cell(5), Cell(4)));
        assert!(goal_achieved(GRID_LANDMARKS[0], Cell(3), Cell(4)));
    }

    #[test]
    fn corridor_plans() {
        let spec = EnvSpec::new(EnvKind::Corridor);
        let c = OptimalController::new(&spec);
        let g6 = goal_index(&spec, "g6");
        assert_eq!(c.action(Cell(3), g6).unwrap(), Action(1));
        assert_eq!(c.path(Cell(3), g6).unwrap(), vec![Cell(3), Cell(4), Cell(5), Cell(6)]);
        assert_eq!(c.action(Cell(6), goal_index(&spec, "g5")).unwrap(), Action(0));
        // already at s6: step back to s5 first
        assert_eq!(c.path(Cell(6), g6).unwrap(), vec![Cell(6), Cell(5), Cell(6)]);
        assert!(c.action(Cell(0), g6).is_err());
    }

    #[test]
    fn grid_plan_to_far_landmark() {
        let spec = EnvSpec::new(EnvKind::Grid);
        let c = OptimalController::new(&spec);
        let g = goal_index(&spec, "g24");
        assert_eq!(c.distance(GRID_START, g), Some(8));
        let path = c.path(GRID_START, g).unwrap();
        assert_eq!(path.len(), 9);
        let manhattan = |a: Cell| {
            let (r, c) = (a.0 / 5, a.0 % 5);
            (4 - r) + (4 - c)
        };
        for w in path.windows(2) {
            assert_eq!(manhattan(w[1]) + 1, manhattan(w[0]));
        }
    }

    #[test]
    fn run_controller_outcomes() {
        let mut env = make_env(EnvKind::Corridor);
        env.reset(0);
        let spec = env.spec().clone();
        let mut c = OptimalController::new(&spec);
        let out = run_controller(&mut c, env.as_mut(), goal_index(&spec, "g6")).unwrap();
        assert_eq!(
            out,
            ControllerOutcome {
                kind: OutcomeKind::GoalReached { final_state: Cell(6) },
                reward: 0.0,
                actions: 3
            }
        );
        let out = run_controller(&mut c, env.as_mut(), goal_index(&spec, "g0")).unwrap();
        assert_eq!(out.kind, OutcomeKind::Terminated);
        assert_eq!(out.reward, 0.01);
        assert_eq!(out.actions, 6);
    }

    #[test]
    fn truncation_is_reported() {
        let mut env = Grid::new();
        env.reset(0);
        let spec = env.spec().clone();
        let mut c = OptimalController::new(&spec);
        let g4 = goal_index(&spec, "g4");
        let g0 = goal_index(&spec, "g0");
        // 7 round trips of 4 + 4 moves = 56 actions, then 4 more run out
        for _ in 0..7 {
            run_controller(&mut c, &mut env, g4).unwrap();
            run_controller(&mut c, &mut env, g0).unwrap();
        }
        let out = run_controller(&mut c, &mut env, g4).unwrap();
        assert_eq!(out.kind, OutcomeKind::Truncated);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn zero_critic_gives_unit_delta_on_arrival() {
        let spec = EnvSpec::new(EnvKind::Corridor);
        let mut ac = ActorCritic::new(&spec, 0.001, 1);
        ac.critic.fill(0.0);
        let s = spec.observe(Cell(5));
        let n = spec.observe(Cell(6));
        let t = Transition {
            state: &s,
            goal: 6,
            action: Action(1),
            next: &n,
            intrinsic: 1.0,
            end: true,
        };
        assert_eq!(ac.gradients(&t).unwrap().delta, 1.0);
    }

    #[test]
    fn actor_critic_learns_to_walk_right() {
        let spec = EnvSpec::new(EnvKind::Corridor);
        let mut ac = ActorCritic::new(&spec, 0.01, 3);
        let mut env = make_env(EnvKind::Corridor);
        let g4 = goal_index(&spec, "g4");
        let mut reached = 0;
        for ep in 0..400 {
            env.reset(ep);
            let out = run_controller(&mut ac, env.as_mut(), g4).unwrap();
            if ep >= 300 && matches!(out.kind, OutcomeKind::GoalReached { .. }) {
                reached += 1;
            }
        }
        assert!(reached >= 90, "{reached}");
        assert_eq!(ac.greedy(&spec.observe(Cell(3)), g4).unwrap(), Action(1));
    }
}
