use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::symbols::{Symbol, SymbolTable};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("trajectory is empty")]
    Empty,
    #[error("trajectory must alternate states and goals and end in a state (got {0} tokens)")]
    EvenLength(usize),
    #[error("expected {expected} at position {position}, found `{found}`")]
    Unexpected {
        position: usize,
        expected: &'static str,
        found: String,
    },
    #[error("derivation string does not contain the terminal state")]
    NoTerminal,
}

/// An alternating state/goal sequence `s (g s)*`.
///
/// Tokens at even positions are states (the last one may be the terminal
/// state), odd positions are goals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TrajectoryString {
    tokens: Vec<String>,
}

impl TrajectoryString {
    pub fn new(tokens: Vec<String>) -> Result<Self, TrajectoryError> {
        if tokens.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if tokens.len().is_multiple_of(2) {
            return Err(TrajectoryError::EvenLength(tokens.len()));
        }
        Ok(TrajectoryString { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `(state, goal)` decisions in order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.tokens.chunks_exact(2).map(|c| (c[0].as_str(), c[1].as_str()))
    }

    pub fn last_state(&self) -> &str {
        self.tokens.last().expect("non-empty")
    }

    /// Number of goal decisions.
    pub fn decisions(&self) -> usize {
        self.tokens.len() / 2
    }
}

impl FromStr for TrajectoryString {
    type Err = TrajectoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TrajectoryString::new(s.split_whitespace().map(str::to_string).collect())
    }
}

impl fmt::Display for TrajectoryString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// A state followed by two different goals in one trajectory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HfWitness {
    pub state: String,
    pub first_goal: String,
    pub second_goal: String,
}

impl fmt::Display for HfWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.state, self.first_goal, self.second_goal)
    }
}

/// Finds the first state that is followed by two distinct goals.
///
/// A grammar with one meta rule per state can never emit such a string, so
/// a witness proves that no state-only goal policy produces the trajectory.
pub fn hf_infeasible(trajectory: &TrajectoryString) -> Option<HfWitness> {
    let mut first: HashMap<&str, &str> = HashMap::new();
    for (state, goal) in trajectory.pairs() {
        match first.get(state) {
            Some(prev) if *prev != goal => {
                return Some(HfWitness {
                    state: state.to_string(),
                    first_goal: prev.to_string(),
                    second_goal: goal.to_string(),
                })
            }
            Some(_) => {}
            None => {
                first.insert(state, goal);
            }
        }
    }
    None
}

/// Splits a completed derivation string into the trajectory (ending in the
/// terminal state) and the trailing visited-state suffix.
pub fn split_trajectory(
    table: &SymbolTable,
    string: &[Symbol],
) -> Result<(TrajectoryString, Vec<String>), TrajectoryError> {
    if string.is_empty() {
        return Err(TrajectoryError::Empty);
    }
    let term = string
        .iter()
        .position(|s| *s == Symbol::Terminal)
        .ok_or(TrajectoryError::NoTerminal)?;
    let unexpected = |position: usize, expected: &'static str| TrajectoryError::Unexpected {
        position,
        expected,
        found: table.name(string[position]).to_string(),
    };
    // prefix: s g (s g)* τ
    if term < 2 || term % 2 != 0 {
        return Err(TrajectoryError::EvenLength(term + 1));
    }
    for (i, sym) in string[..term].iter().enumerate() {
        let ok = if i % 2 == 0 {
            matches!(sym, Symbol::State(_))
        } else {
            matches!(sym, Symbol::Goal(_))
        };
        if !ok {
            return Err(unexpected(i, if i % 2 == 0 { "a state" } else { "a goal" }));
        }
    }
    let mut suffix = Vec::with_capacity(string.len() - term - 1);
    for (i, sym) in string.iter().enumerate().skip(term + 1) {
        match sym {
            Symbol::State(s) => suffix.push(table.state_name(*s).to_string()),
            _ => return Err(unexpected(i, "a state")),
        }
    }
    let prefix = string[..=term].iter().map(|s| table.name(*s).to_string()).collect();
    Ok((TrajectoryString::new(prefix)?, suffix))
}
