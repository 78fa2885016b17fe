use std::collections::BTreeMap;

use super::rules::ProductionRule;
use super::symbols::{GoalId, StateId, SymbolTable};
use super::{ConstrainedGrammar, KRecurrentGrammar, RuleSet};

/// A violated well-formedness clause.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoStartRule,
    DuplicateStartRule {
        state: StateId,
        count: usize,
    },
    /// Constrained grammars need exactly one meta rule per state.
    MetaRuleCount {
        state: StateId,
        count: usize,
    },
    /// Constrained grammars allow no context right of `<META>`.
    UnexpectedContext {
        state: StateId,
        context: Vec<StateId>,
    },
    ContextTooLong {
        state: StateId,
        context: Vec<StateId>,
        k: usize,
    },
    /// Two meta rules share the same state and exact context.
    DuplicateMetaRule {
        state: StateId,
        context: Vec<StateId>,
        count: usize,
    },
    /// Every `(state, goal)` pair needs exactly one `<ACT>` rule.
    ActRuleCount {
        state: StateId,
        goal: GoalId,
        count: usize,
    },
}

/// Legal but worth flagging.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Warning {
    /// Both contexts can match one history; derivation picks the longer.
    OverlappingContexts {
        state: StateId,
        shorter: Vec<StateId>,
        longer: Vec<StateId>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// One line per violation and warning, in the grammar's own notation.
    pub fn render(&self, t: &SymbolTable) -> Vec<String> {
        let ctx = |c: &[StateId]| {
            if c.is_empty() {
                "(empty)".to_string()
            } else {
                c.iter().map(|s| t.state_name(*s)).collect::<Vec<_>>().join(" ")
            }
        };
        let mut out: Vec<String> = self
            .violations
            .iter()
            .map(|v| match v {
                Violation::NoStartRule => "error: no start rule".to_string(),
                Violation::DuplicateStartRule { state, count } => {
                    format!("error: {count} start rules for state {}", t.state_name(*state))
                }
                Violation::MetaRuleCount { state, count } => format!(
                    "error: state {} has {count} meta rules, expected exactly one",
                    t.state_name(*state)
                ),
                Violation::UnexpectedContext { state, context } => format!(
                    "error: meta rule for {} has context `{}` in a constrained grammar",
                    t.state_name(*state),
                    ctx(context)
                ),
                Violation::ContextTooLong { state, context, k } => format!(
                    "error: meta rule for {} has context `{}` longer than k = {k}",
                    t.state_name(*state),
                    ctx(context)
                ),
                Violation::DuplicateMetaRule { state, context, count } => format!(
                    "error: {count} meta rules for {} with context `{}`",
                    t.state_name(*state),
                    ctx(context)
                ),
                Violation::ActRuleCount { state, goal, count } => format!(
                    "error: pair ({}, {}) has {count} <ACT> rules, expected exactly one",
                    t.state_name(*state),
                    t.goal_name(*goal)
                ),
            })
            .collect();
        out.extend(self.warnings.iter().map(|w| match w {
            Warning::OverlappingContexts { state, shorter, longer } => format!(
                "warning: meta contexts `{}` and `{}` for {} overlap; the longer one wins",
                ctx(shorter),
                ctx(longer),
                t.state_name(*state)
            ),
        }));
        out
    }
}

pub fn validate_constrained(g: &ConstrainedGrammar) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_start_rules(g, &mut report);

    let mut per_state: BTreeMap<StateId, usize> = BTreeMap::new();
    for rule in g.rules() {
        if let ProductionRule::Meta { state, context, .. } = rule {
            *per_state.entry(*state).or_default() += 1;
            if !context.is_empty() {
                report.violations.push(Violation::UnexpectedContext {
                    state: *state,
                    context: context.clone(),
                });
            }
        }
    }
    for s in g.symbols().states() {
        let count = per_state.get(&s).copied().unwrap_or(0);
        if count != 1 {
            report.violations.push(Violation::MetaRuleCount { state: s, count });
        }
    }

    check_act_rules(g, &mut report);
    report
}

pub fn validate_k_recurrent(g: &KRecurrentGrammar) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_start_rules(g, &mut report);

    let mut per_context: BTreeMap<(StateId, Vec<StateId>), usize> = BTreeMap::new();
    for rule in g.rules() {
        if let ProductionRule::Meta { state, context, .. } = rule {
            if context.len() > g.k() {
                report.violations.push(Violation::ContextTooLong {
                    state: *state,
                    context: context.clone(),
                    k: g.k(),
                });
            }
            *per_context.entry((*state, context.clone())).or_default() += 1;
        }
    }
    for ((state, context), count) in &per_context {
        if *count > 1 {
            report.violations.push(Violation::DuplicateMetaRule {
                state: *state,
                context: context.clone(),
                count: *count,
            });
        }
    }
    let keys: Vec<&(StateId, Vec<StateId>)> = per_context.keys().collect();
    for (i, (sa, ca)) in keys.iter().map(|k| (&k.0, &k.1)).enumerate() {
        for (sb, cb) in keys[i + 1..].iter().map(|k| (&k.0, &k.1)) {
            if sa != sb || ca.len() == cb.len() {
                continue;
            }
            let (shorter, longer) = if ca.len() < cb.len() { (ca, cb) } else { (cb, ca) };
            if longer.starts_with(shorter) {
                report.warnings.push(Warning::OverlappingContexts {
                    state: *sa,
                    shorter: shorter.clone(),
                    longer: longer.clone(),
                });
            }
        }
    }

    check_act_rules(g, &mut report);
    report
}

fn check_start_rules(g: &impl RuleSet, report: &mut ValidationReport) {
    let mut starts: BTreeMap<StateId, usize> = BTreeMap::new();
    for rule in g.rules() {
        if let ProductionRule::Start { state } = rule {
            *starts.entry(*state).or_default() += 1;
        }
    }
    if starts.is_empty() {
        report.violations.push(Violation::NoStartRule);
    }
    for (state, count) in starts {
        if count > 1 {
            report.violations.push(Violation::DuplicateStartRule { state, count });
        }
    }
}

fn check_act_rules(g: &impl RuleSet, report: &mut ValidationReport) {
    let mut per_pair: BTreeMap<(StateId, GoalId), usize> = BTreeMap::new();
    for pair in g.rules().iter().filter_map(ProductionRule::act_pair) {
        *per_pair.entry(pair).or_default() += 1;
    }
    let t = g.symbols();
    for s in t.states() {
        for goal in t.goals() {
            let count = per_pair.get(&(s, goal)).copied().unwrap_or(0);
            if count != 1 {
                report
                    .violations
                    .push(Violation::ActRuleCount { state: s, goal, count });
            }
        }
    }
}
