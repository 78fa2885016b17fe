//! Episodic environments: Corridor, Stochastic Corridor and Grid.
//!
//! Corridor is a 7-cell chain `s0 … s6` with `s0` terminal; the agent starts
//! in `s3`. Reaching `s0` pays `+1` after at least two visits to `s6` (a
//! visit is an `s5 → s6` move) and `+0.01` otherwise; running out of the
//! 20-action budget pays 0. The stochastic variant resolves every right move
//! to the left with probability 0.5.
//!
//! Grid is a 5×5 board; the agent starts top-left and the terminal cell sits
//! above the middle of the top row. It pays `+1` on termination iff the
//! agent has visited landmark 1, the start, landmark 2, the start, landmark 3
//! and the start again in that order (other visits may be interleaved).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment cell index; includes the terminal cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Action(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Corridor,
    StochasticCorridor,
    Grid,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Corridor, EnvKind::StochasticCorridor, EnvKind::Grid];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Corridor => "corridor",
            EnvKind::StochasticCorridor => "stochastic-corridor",
            EnvKind::Grid => "grid",
        }
    }

    pub fn is_deterministic(self) -> bool {
        self != EnvKind::StochasticCorridor
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown environment `{s}`"))
    }
}

/// A state as seen by agents: its id and a one-hot observation.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub id: Cell,
    pub observation: Vec<f64>,
}

/// Special-cell arrivals recorded by Grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VisitTag {
    Start,
    Landmark(u8),
    Terminal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    /// Corridor: an `s5 → s6` move.
    VisitedS6,
    /// Grid: arrival at the start cell or a landmark.
    Arrived(VisitTag),
    ReachedTerminal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    /// The step budget ran out before the terminal state was reached.
    pub truncated: bool,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoalSpec {
    pub name: String,
    pub target: Cell,
}

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub state_names: Vec<String>,
    pub action_names: Vec<&'static str>,
    pub start: Cell,
    pub terminal: Cell,
    pub goals: Vec<GoalSpec>,
    /// Primitive actions per episode.
    pub step_limit: usize,
}

pub const CORRIDOR_LEN: usize = 7;
pub const CORRIDOR_STEP_LIMIT: usize = 20;
pub const GRID_SIZE: usize = 5;
pub const GRID_STEP_LIMIT: usize = 60;

const LEFT: usize = 0;
const RIGHT: usize = 1;
const UP: usize = 0;
const DOWN: usize = 1;
const GRID_LEFT: usize = 2;
const GRID_RIGHT: usize = 3;

/// Cell entered by `Up` from the middle of the top row.
pub const GRID_TERMINAL: Cell = Cell(GRID_SIZE * GRID_SIZE);
pub const GRID_START: Cell = Cell(0);
pub const GRID_LANDMARKS: [Cell; 3] = [
    Cell(GRID_SIZE - 1),
    Cell(GRID_SIZE * (GRID_SIZE - 1)),
    Cell(GRID_SIZE * GRID_SIZE - 1),
];
const GRID_EXIT: Cell = Cell(2);

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Corridor | EnvKind::StochasticCorridor => EnvSpec {
                kind,
                state_names: (0..CORRIDOR_LEN).map(|i| format!("s{i}")).collect(),
                action_names: vec!["left", "right"],
                start: Cell(3),
                terminal: Cell(0),
                goals: (0..CORRIDOR_LEN)
                    .map(|i| GoalSpec {
                        name: format!("g{i}"),
                        target: Cell(i),
                    })
                    .collect(),
                step_limit: CORRIDOR_STEP_LIMIT,
            },
            EnvKind::Grid => {
                let mut state_names: Vec<String> = (0..GRID_SIZE * GRID_SIZE).map(|i| format!("s{i}")).collect();
                state_names.push("τ".into());
                let goal = |target: Cell, name: &str| GoalSpec {
                    name: name.to_string(),
                    target,
                };
                EnvSpec {
                    kind,
                    state_names,
                    action_names: vec!["up", "down", "left", "right"],
                    start: GRID_START,
                    terminal: GRID_TERMINAL,
                    goals: vec![
                        goal(GRID_START, "g0"),
                        goal(GRID_LANDMARKS[0], "g4"),
                        goal(GRID_LANDMARKS[1], "g20"),
                        goal(GRID_LANDMARKS[2], "g24"),
                        goal(GRID_TERMINAL, "gτ"),
                    ],
                    step_limit: GRID_STEP_LIMIT,
                }
            }
        }
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_goals(&self) -> usize {
        self.goals.len()
    }

    /// Non-terminal cells in index order.
    pub fn nonterminal_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.num_states()).map(Cell).filter(move |c| *c != self.terminal)
    }

    pub fn observe(&self, cell: Cell) -> EnvState {
        let mut observation = vec![0.0; self.num_states()];
        observation[cell.0] = 1.0;
        EnvState { id: cell, observation }
    }

    /// Deterministic transition model; for the stochastic corridor this is
    /// the intended direction of each move.
    pub fn intended_next(&self, cell: Cell, action: Action) -> Cell {
        if cell == self.terminal {
            return cell;
        }
        match self.kind {
            EnvKind::Corridor | EnvKind::StochasticCorridor => match action.0 {
                LEFT => Cell(cell.0 - 1),
                _ => Cell((cell.0 + 1).min(CORRIDOR_LEN - 1)),
            },
            EnvKind::Grid => {
                let (r, c) = (cell.0 / GRID_SIZE, cell.0 % GRID_SIZE);
                let (r, c) = match action.0 {
                    UP if r == 0 => return if cell == GRID_EXIT { GRID_TERMINAL } else { cell },
                    UP => (r - 1, c),
                    DOWN => ((r + 1).min(GRID_SIZE - 1), c),
                    GRID_LEFT => (r, c.saturating_sub(1)),
                    GRID_RIGHT => (r, (c + 1).min(GRID_SIZE - 1)),
                    _ => return cell,
                };
                Cell(r * GRID_SIZE + c)
            }
        }
    }

    /// Grid visit tag of a cell, if special.
    pub fn visit_tag(&self, cell: Cell) -> Option<VisitTag> {
        if self.kind != EnvKind::Grid {
            return None;
        }
        if cell == GRID_START {
            return Some(VisitTag::Start);
        }
        if cell == GRID_TERMINAL {
            return Some(VisitTag::Terminal);
        }
        GRID_LANDMARKS
            .iter()
            .position(|l| *l == cell)
            .map(|i| VisitTag::Landmark(i as u8 + 1))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("the episode is over; call reset first")]
    EpisodeOver,
    #[error("action {0} is out of range")]
    BadAction(usize),
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    /// Starts a new episode and reseeds the environment's randomness.
    fn reset(&mut self, seed: u64) -> EnvState;
    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError>;
    fn current(&self) -> Cell;
    fn steps_taken(&self) -> usize;
    fn is_done(&self) -> bool;
}

pub fn make_env(kind: EnvKind) -> Box<dyn Environment> {
    match kind {
        EnvKind::Corridor | EnvKind::StochasticCorridor => Box::new(Corridor::new(kind)),
        EnvKind::Grid => Box::new(Grid::new()),
    }
}

#[derive(Clone, Debug)]
pub struct Corridor {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    state: Cell,
    s6_visits: u32,
    steps: usize,
    done: bool,
}

impl Corridor {
    pub fn new(kind: EnvKind) -> Self {
        assert!(kind != EnvKind::Grid, "not a corridor kind");
        let spec = EnvSpec::new(kind);
        Corridor {
            state: spec.start,
            spec,
            rng: ChaCha8Rng::seed_from_u64(0),
            s6_visits: 0,
            steps: 0,
            done: false,
        }
    }

    pub fn s6_visits(&self) -> u32 {
        self.s6_visits
    }
}

impl Environment for Corridor {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.spec.start;
        self.s6_visits = 0;
        self.steps = 0;
        self.done = false;
        self.spec.observe(self.state)
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action.0 >= self.spec.num_actions() {
            return Err(EnvError::BadAction(action.0));
        }
        let prev = self.state;
        let resolved =
            if self.spec.kind == EnvKind::StochasticCorridor && action.0 == RIGHT && !self.rng.random_bool(0.5) {
                Action(LEFT)
            } else {
                action
            };
        let next = self.spec.intended_next(prev, resolved);
        self.state = next;
        self.steps += 1;

        let mut events = Vec::new();
        if prev == Cell(CORRIDOR_LEN - 2) && next == Cell(CORRIDOR_LEN - 1) {
            self.s6_visits += 1;
            events.push(Event::VisitedS6);
        }
        let (reward, truncated) = if next == self.spec.terminal {
            events.push(Event::ReachedTerminal);
            self.done = true;
            (if self.s6_visits >= 2 { 1.0 } else { 0.01 }, false)
        } else if self.steps >= self.spec.step_limit {
            self.done = true;
            (0.0, true)
        } else {
            (0.0, false)
        };
        Ok(StepOutcome {
            next_state: self.spec.observe(next),
            reward,
            done: self.done,
            truncated,
            events,
        })
    }

    fn current(&self) -> Cell {
        self.state
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn is_done(&self) -> bool {
        self.done
    }
}

/// True iff `log` contains `1 0 2 0 3 0` as a subsequence followed later by
/// the terminal tag.
pub fn grid_reward_condition(log: &[VisitTag]) -> bool {
    const REQUIRED: [VisitTag; 6] = [
        VisitTag::Landmark(1),
        VisitTag::Start,
        VisitTag::Landmark(2),
        VisitTag::Start,
        VisitTag::Landmark(3),
        VisitTag::Start,
    ];
    let mut matched = 0;
    for tag in log {
        if matched == REQUIRED.len() {
            if *tag == VisitTag::Terminal {
                return true;
            }
        } else if *tag == REQUIRED[matched] {
            matched += 1;
        }
    }
    false
}

#[derive(Clone, Debug)]
pub struct Grid {
    spec: EnvSpec,
    state: Cell,
    log: Vec<VisitTag>,
    steps: usize,
    done: bool,
}

impl Default for Grid {
    fn default() -> Self {
        Self::new()
    }
}

impl Grid {
    pub fn new() -> Self {
        let spec = EnvSpec::new(EnvKind::Grid);
        Grid {
            state: spec.start,
            spec,
            log: vec![VisitTag::Start],
            steps: 0,
            done: false,
        }
    }

    /// Special-cell arrivals so far; the initial placement counts.
    pub fn visit_log(&self) -> &[VisitTag] {
        &self.log
    }
}

impl Environment for Grid {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> EnvState {
        self.state = self.spec.start;
        self.log.clear();
        self.log.push(VisitTag::Start);
        self.steps = 0;
        self.done = false;
        self.spec.observe(self.state)
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action.0 >= self.spec.num_actions() {
            return Err(EnvError::BadAction(action.0));
        }
        let prev = self.state;
        let next = self.spec.intended_next(prev, action);
        self.state = next;
        self.steps += 1;

        let mut events = Vec::new();
        if next != prev {
            if let Some(tag) = self.spec.visit_tag(next) {
                self.log.push(tag);
                if tag != VisitTag::Terminal {
                    events.push(Event::Arrived(tag));
                }
            }
        }
        let (reward, truncated) = if next == self.spec.terminal {
            events.push(Event::ReachedTerminal);
            self.done = true;
            (if grid_reward_condition(&self.log) { 1.0 } else { 0.0 }, false)
        } else if self.steps >= self.spec.step_limit {
            self.done = true;
            (0.0, true)
        } else {
            (0.0, false)
        };
        Ok(StepOutcome {
            next_state: self.spec.observe(next),
            reward,
            done: self.done,
            truncated,
            events,
        })
    }

    fn current(&self) -> Cell {
        self.state
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn is_done(&self) -> bool {
        self.done
    }
}

/// Mean return of uniformly random primitive actions.
pub fn random_policy_baseline(kind: EnvKind, episodes: usize, seed: u64) -> f64 {
    assert!(episodes >= 1, "need at least one episode");
    let mut env = make_env(kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = env.spec().num_actions();
    let mut total = 0.0;
    for _ in 0..episodes {
        env.reset(rng.random());
        loop {
            let out = env.step(Action(rng.random_range(0..n))).expect("episode is live");
            total += out.reward;
            if out.done {
                break;
            }
        }
    }
    total / episodes as f64
}
