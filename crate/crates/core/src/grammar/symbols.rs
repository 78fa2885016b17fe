//! Interned symbols for trajectory grammars.
//!
//! Terminals are split into nonterminal environment states, goals and the
//! single terminal state; the nonterminal alphabet is fixed to `S`, `<META>`
//! and `<ACT>`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Index of a (non-terminal) environment state in a [`SymbolTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u16);

/// Index of a goal in a [`SymbolTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GoalId(pub u16);

/// A symbol of a sentential form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Symbol {
    Start,
    Meta,
    Act,
    State(StateId),
    Goal(GoalId),
    Terminal,
}

impl Symbol {
    pub fn is_nonterminal(self) -> bool {
        matches!(self, Symbol::Start | Symbol::Meta | Symbol::Act)
    }
}

pub const START_TOKEN: &str = "S";
pub const META_TOKEN: &str = "<META>";
pub const ACT_TOKEN: &str = "<ACT>";
pub const ARROW_TOKEN: &str = "->";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SymbolError {
    #[error("symbol `{0}` is declared more than once")]
    Duplicate(String),
    #[error("symbol name `{0}` is reserved")]
    Reserved(String),
    #[error("symbol name `{0:?}` is empty or contains whitespace")]
    BadName(String),
    #[error("too many symbols ({0})")]
    TooMany(usize),
}

/// The terminal alphabet of a grammar: states, goals and the terminal state.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    states: Vec<String>,
    goals: Vec<String>,
    terminal: String,
    index: HashMap<String, Symbol>,
}

impl PartialEq for SymbolTable {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states && self.goals == other.goals && self.terminal == other.terminal
    }
}

impl Eq for SymbolTable {}

impl SymbolTable {
    pub fn new<S: Into<String>>(
        states: impl IntoIterator<Item = S>,
        goals: impl IntoIterator<Item = S>,
        terminal: impl Into<String>,
    ) -> Result<Self, SymbolError> {
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        let goals: Vec<String> = goals.into_iter().map(Into::into).collect();
        let terminal = terminal.into();
        if states.len() > u16::MAX as usize || goals.len() > u16::MAX as usize {
            return Err(SymbolError::TooMany(states.len().max(goals.len())));
        }
        let mut index = HashMap::new();
        let mut insert = |name: &str, sym: Symbol| -> Result<(), SymbolError> {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(SymbolError::BadName(name.to_string()));
            }
            if [START_TOKEN, META_TOKEN, ACT_TOKEN, ARROW_TOKEN].contains(&name) {
                return Err(SymbolError::Reserved(name.to_string()));
            }
            if index.insert(name.to_string(), sym).is_some() {
                return Err(SymbolError::Duplicate(name.to_string()));
            }
            Ok(())
        };
        for (i, s) in states.iter().enumerate() {
            insert(s, Symbol::State(StateId(i as u16)))?;
        }
        for (i, g) in goals.iter().enumerate() {
            insert(g, Symbol::Goal(GoalId(i as u16)))?;
        }
        insert(&terminal, Symbol::Terminal)?;
        Ok(SymbolTable {
            states,
            goals,
            terminal,
            index,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_goals(&self) -> usize {
        self.goals.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.states.len()).map(|i| StateId(i as u16))
    }

    pub fn goals(&self) -> impl Iterator<Item = GoalId> + '_ {
        (0..self.goals.len()).map(|i| GoalId(i as u16))
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s.0 as usize]
    }

    pub fn goal_name(&self, g: GoalId) -> &str {
        &self.goals[g.0 as usize]
    }

    pub fn terminal_name(&self) -> &str {
        &self.terminal
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn goal_names(&self) -> &[String] {
        &self.goals
    }

    /// Resolves a token, including the reserved nonterminal tokens.
    pub fn lookup(&self, token: &str) -> Option<Symbol> {
        match token {
            START_TOKEN => Some(Symbol::Start),
            META_TOKEN => Some(Symbol::Meta),
            ACT_TOKEN => Some(Symbol::Act),
            _ => self.index.get(token).copied(),
        }
    }

    pub fn state(&self, name: &str) -> Option<StateId> {
        match self.index.get(name) {
            Some(Symbol::State(s)) => Some(*s),
            _ => None,
        }
    }

    pub fn goal(&self, name: &str) -> Option<GoalId> {
        match self.index.get(name) {
            Some(Symbol::Goal(g)) => Some(*g),
            _ => None,
        }
    }

    pub fn name(&self, sym: Symbol) -> &str {
        match sym {
            Symbol::Start => START_TOKEN,
            Symbol::Meta => META_TOKEN,
            Symbol::Act => ACT_TOKEN,
            Symbol::State(s) => self.state_name(s),
            Symbol::Goal(g) => self.goal_name(g),
            Symbol::Terminal => &self.terminal,
        }
    }

    /// Space-separated rendering of a symbol sequence.
    pub fn render(&self, symbols: &[Symbol]) -> String {
        Rendered { table: self, symbols }.to_string()
    }

    /// Parses a whitespace-separated symbol sequence.
    pub fn parse_symbols(&self, text: &str) -> Result<Vec<Symbol>, String> {
        text.split_whitespace()
            .map(|t| self.lookup(t).ok_or_else(|| t.to_string()))
            .collect()
    }
}

struct Rendered<'a> {
    table: &'a SymbolTable,
    symbols: &'a [Symbol],
}

impl fmt::Display for Rendered<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(self.table.name(*s))?;
        }
        Ok(())
    }
}
