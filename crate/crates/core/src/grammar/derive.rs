//! Deterministic derivation engine.
//!
//! Every sentential form reachable from `S` contains exactly one
//! nonterminal, so a derivation is a straight line: rewrite that nonterminal
//! with the unique applicable rule until none remains. For `<META>` the
//! states right of it are the visited-state history (most recent first); the
//! meta rule whose context is the longest prefix of that history applies.

use std::collections::HashMap;

use thiserror::Error;

use super::rules::ProductionRule;
use super::symbols::{GoalId, StateId, Symbol};
use super::RuleSet;

pub const DEFAULT_MAX_STEPS: usize = 10_000;

/// Why a derivation stopped without completing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MissingRule {
    /// No meta rule for `state` has a context matching `history`.
    Meta { state: StateId, history: Vec<StateId> },
    /// No `<ACT>` rule for the pair.
    Act { state: StateId, goal: GoalId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DerivationResult {
    /// No nonterminal remains. `string` is the full terminal string:
    /// trajectory, then the visited states in reverse order.
    Completed {
        string: Vec<Symbol>,
        steps: usize,
    },
    Stuck {
        form: Vec<Symbol>,
        missing: MissingRule,
    },
    /// An `ActLoop` rule fired; the pair never yields a string.
    Looping {
        state: StateId,
        goal: GoalId,
        form: Vec<Symbol>,
    },
    /// The step budget ran out before the derivation finished.
    StepLimit {
        form: Vec<Symbol>,
        steps: usize,
    },
}

impl DerivationResult {
    /// The current form (or final string).
    pub fn form(&self) -> &[Symbol] {
        match self {
            DerivationResult::Completed { string, .. } => string,
            DerivationResult::Stuck { form, .. }
            | DerivationResult::Looping { form, .. }
            | DerivationResult::StepLimit { form, .. } => form,
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, DerivationResult::Completed { .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeriveError {
    #[error("no start rule for the requested start state")]
    NoStartRule(StateId),
    #[error("max_steps must be at least 1")]
    ZeroBudget,
    #[error("more than one rule applies to the same nonterminal")]
    Ambiguous(ProductionRule, ProductionRule),
}

struct Index<'a> {
    meta: HashMap<StateId, Vec<(&'a [StateId], GoalId)>>,
    act: HashMap<(StateId, GoalId), &'a ProductionRule>,
}

impl<'a> Index<'a> {
    fn build(rules: &'a [ProductionRule]) -> Result<Self, DeriveError> {
        let mut meta: HashMap<StateId, Vec<(&[StateId], GoalId)>> = HashMap::new();
        let mut act: HashMap<(StateId, GoalId), &ProductionRule> = HashMap::new();
        let mut meta_rules: HashMap<(StateId, &[StateId]), &ProductionRule> = HashMap::new();
        for rule in rules {
            match rule {
                ProductionRule::Meta { state, context, goal } => {
                    if let Some(prev) = meta_rules.insert((*state, context), rule) {
                        if prev != rule {
                            return Err(DeriveError::Ambiguous(prev.clone(), rule.clone()));
                        }
                        continue;
                    }
                    meta.entry(*state).or_default().push((context, *goal));
                }
                ProductionRule::Start { .. } => {}
                _ => {
                    let pair = rule.act_pair().expect("act rule");
                    if let Some(prev) = act.insert(pair, rule) {
                        if prev != rule {
                            return Err(DeriveError::Ambiguous(prev.clone(), rule.clone()));
                        }
                    }
                }
            }
        }
        for list in meta.values_mut() {
            list.sort_by_key(|r| std::cmp::Reverse(r.0.len()));
        }
        Ok(Index { meta, act })
    }

    fn meta_goal(&self, state: StateId, history: &[Symbol]) -> Option<GoalId> {
        self.meta.get(&state)?.iter().find_map(|(ctx, goal)| {
            let matches = ctx.len() <= history.len() && ctx.iter().zip(history).all(|(c, h)| *h == Symbol::State(*c));
            matches.then_some(*goal)
        })
    }
}

/// Derives from `S` restricted to the start rule for `start`.
pub fn derive(grammar: &impl RuleSet, start: StateId, max_steps: usize) -> Result<DerivationResult, DeriveError> {
    derive_traced(grammar, start, max_steps, |_| {})
}

/// Like [`derive`], calling `observe` with every sentential form, starting
/// with `S` itself.
pub fn derive_traced(
    grammar: &impl RuleSet,
    start: StateId,
    max_steps: usize,
    mut observe: impl FnMut(&[Symbol]),
) -> Result<DerivationResult, DeriveError> {
    if max_steps == 0 {
        return Err(DeriveError::ZeroBudget);
    }
    let rules = grammar.rules();
    if !rules.contains(&ProductionRule::Start { state: start }) {
        return Err(DeriveError::NoStartRule(start));
    }
    let index = Index::build(rules)?;

    let mut form = vec![Symbol::Start];
    observe(&form);
    form = vec![Symbol::State(start), Symbol::Meta];
    let mut steps = 1;
    // Position of the single nonterminal.
    let mut pos = 1;
    observe(&form);

    loop {
        debug_assert_eq!(
            form.iter().filter(|s| s.is_nonterminal()).count(),
            1,
            "sentential form must hold exactly one nonterminal"
        );
        if steps >= max_steps {
            return Ok(DerivationResult::StepLimit { form, steps });
        }
        match form[pos] {
            Symbol::Meta => {
                let Symbol::State(state) = form[pos - 1] else {
                    unreachable!("<META> is always preceded by a state")
                };
                let history = &form[pos + 1..];
                let Some(goal) = index.meta_goal(state, history) else {
                    let history = history
                        .iter()
                        .map(|s| match s {
                            Symbol::State(id) => *id,
                            _ => unreachable!("only states follow <META>"),
                        })
                        .collect();
                    return Ok(DerivationResult::Stuck {
                        form,
                        missing: MissingRule::Meta { state, history },
                    });
                };
                // s <META> c -> s g <ACT> s c
                form.splice(pos..=pos, [Symbol::Goal(goal), Symbol::Act, Symbol::State(state)]);
                pos += 1;
            }
            Symbol::Act => {
                let (Symbol::State(state), Symbol::Goal(goal)) = (form[pos - 2], form[pos - 1]) else {
                    unreachable!("<ACT> is always preceded by a state and a goal")
                };
                match index.act.get(&(state, goal)) {
                    None => {
                        return Ok(DerivationResult::Stuck {
                            form,
                            missing: MissingRule::Act { state, goal },
                        })
                    }
                    Some(ProductionRule::ActLoop { .. }) => return Ok(DerivationResult::Looping { state, goal, form }),
                    Some(ProductionRule::ActReturn { next, .. }) => {
                        form.splice(pos..=pos, [Symbol::State(*next), Symbol::Meta]);
                        pos += 1;
                    }
                    Some(ProductionRule::ActTerminate { .. }) => {
                        form[pos] = Symbol::Terminal;
                        steps += 1;
                        observe(&form);
                        return Ok(DerivationResult::Completed { string: form, steps });
                    }
                    Some(other) => unreachable!("indexed non-act rule {other:?}"),
                }
            }
            other => unreachable!("unexpected nonterminal {other:?}"),
        }
        steps += 1;
        observe(&form);
    }
}
