//! Line-oriented grammar files.
//!
//! ```text
//! # comment
//! states: s1 s2 s3 s4 s5 s6
//! goals: g0 g1 g2 g3 g4 g5 g6
//! terminal: s0
//! k: 2
//! S -> s3 <META>
//! s6 <META> s3 -> s6 g5 <ACT> s6 s3
//! s6 g5 <ACT> -> s6 g5 s5 <META>
//! ```
//!
//! Without a `k:` header the file describes a constrained grammar.

use std::fmt::Write as _;

use thiserror::Error;

use super::rules::ProductionRule;
use super::symbols::{SymbolError, SymbolTable};
use super::{ConstrainedGrammar, Grammar, KRecurrentGrammar, RuleSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing `{0}:` header")]
    MissingHeader(&'static str),
    #[error(transparent)]
    Symbols(#[from] SymbolError),
}

pub fn parse_grammar(text: &str) -> Result<Grammar, ParseError> {
    let mut states = None;
    let mut goals = None;
    let mut terminal = None;
    let mut k = None;
    let mut rule_lines = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ParseError::Line { line: i + 1, message };
        if line.contains("->") {
            rule_lines.push((i + 1, line));
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| err(format!("expected a header or a rule, found `{line}`")))?;
        let values: Vec<String> = value.split_whitespace().map(str::to_string).collect();
        match key.trim() {
            "states" => states = Some(values),
            "goals" => goals = Some(values),
            "terminal" => match values.as_slice() {
                [t] => terminal = Some(t.clone()),
                _ => return Err(err("`terminal:` takes exactly one symbol".into())),
            },
            "k" => match values.as_slice() {
                [v] => k = Some(v.parse::<usize>().map_err(|_| err(format!("invalid k `{v}`")))?),
                _ => return Err(err("`k:` takes exactly one integer".into())),
            },
            other => return Err(err(format!("unknown header `{other}`"))),
        }
    }

    let table = SymbolTable::new(
        states.ok_or(ParseError::MissingHeader("states"))?,
        goals.ok_or(ParseError::MissingHeader("goals"))?,
        terminal.ok_or(ParseError::MissingHeader("terminal"))?,
    )?;
    let rules = rule_lines
        .into_iter()
        .map(|(line, text)| ProductionRule::parse(text, &table).map_err(|message| ParseError::Line { line, message }))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(match k {
        None => Grammar::Constrained(ConstrainedGrammar::new(table, rules)),
        Some(k) => Grammar::KRecurrent(KRecurrentGrammar::new(table, k, rules)),
    })
}

pub fn print_grammar(grammar: &Grammar) -> String {
    let t = grammar.symbols();
    let mut out = String::new();
    writeln!(out, "states: {}", t.state_names().join(" ")).unwrap();
    writeln!(out, "goals: {}", t.goal_names().join(" ")).unwrap();
    writeln!(out, "terminal: {}", t.terminal_name()).unwrap();
    if let Grammar::KRecurrent(g) = grammar {
        writeln!(out, "k: {}", g.k()).unwrap();
    }
    for rule in grammar.rules() {
        writeln!(out, "{}", rule.render(t)).unwrap();
    }
    out
}
