//! Grammar extraction from a deterministic goal policy.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use super::rules::ProductionRule;
use super::symbols::{GoalId, StateId, SymbolTable};
use super::KRecurrentGrammar;

/// Deterministic goal choice keyed by state history, most recent state first.
/// Keys have length `1..=k + 1`: the current state and up to `k` earlier ones.
pub type PolicyMap = BTreeMap<Vec<StateId>, GoalId>;

/// What the controller does when handed a goal in a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerBehavior {
    Reaches(StateId),
    Terminates,
    Loops,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("policy is undefined on reachable history `{0}`")]
    UndefinedHistory(String),
    #[error("no controller outcome for ({0}, {1})")]
    MissingOutcome(String, String),
    #[error("policy key `{0}` is empty or longer than k + 1")]
    BadKey(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutEnd {
    Terminated,
    /// The controller never returns on the last pair.
    Loops,
    /// A memory key repeated, so the meta level cycles forever.
    Cycle,
}

/// Meta-level rollout of a policy against controller outcomes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rollout {
    pub decisions: Vec<(StateId, GoalId)>,
    pub end: RolloutEnd,
}

impl Rollout {
    /// Renders `s g s g ... τ`; non-terminating rollouts end after their
    /// last goal.
    pub fn render(&self, table: &SymbolTable) -> String {
        let mut parts: Vec<&str> = Vec::new();
        for (s, g) in &self.decisions {
            parts.push(table.state_name(*s));
            parts.push(table.goal_name(*g));
        }
        if self.end == RolloutEnd::Terminated {
            parts.push(table.terminal_name());
        }
        parts.join(" ")
    }
}

fn render_history(table: &SymbolTable, h: &[StateId]) -> String {
    h.iter().map(|s| table.state_name(*s)).collect::<Vec<_>>().join(" ")
}

fn outcome(
    table: &SymbolTable,
    outcomes: &BTreeMap<(StateId, GoalId), ControllerBehavior>,
    s: StateId,
    g: GoalId,
) -> Result<ControllerBehavior, ExtractError> {
    outcomes
        .get(&(s, g))
        .copied()
        .ok_or_else(|| ExtractError::MissingOutcome(table.state_name(s).into(), table.goal_name(g).into()))
}

/// Rolls the policy out from `start`, keeping at most `k + 1` states of
/// memory. Also returns the memory keys consulted, in order.
fn rollout_keys(
    table: &SymbolTable,
    policy: &PolicyMap,
    outcomes: &BTreeMap<(StateId, GoalId), ControllerBehavior>,
    start: StateId,
    k: usize,
) -> Result<(Rollout, Vec<Vec<StateId>>), ExtractError> {
    let mut key = vec![start];
    let mut seen = HashSet::new();
    let mut keys = Vec::new();
    let mut decisions = Vec::new();
    loop {
        if !seen.insert(key.clone()) {
            return Ok((
                Rollout {
                    decisions,
                    end: RolloutEnd::Cycle,
                },
                keys,
            ));
        }
        let state = key[0];
        let goal = *policy
            .get(&key)
            .ok_or_else(|| ExtractError::UndefinedHistory(render_history(table, &key)))?;
        keys.push(key.clone());
        decisions.push((state, goal));
        let end = match outcome(table, outcomes, state, goal)? {
            ControllerBehavior::Reaches(next) => {
                key.insert(0, next);
                key.truncate(k + 1);
                continue;
            }
            ControllerBehavior::Terminates => RolloutEnd::Terminated,
            ControllerBehavior::Loops => RolloutEnd::Loops,
        };
        return Ok((Rollout { decisions, end }, keys));
    }
}

/// Meta-level rollout of `policy` from `start` with memory `k`.
pub fn rollout(
    table: &SymbolTable,
    policy: &PolicyMap,
    outcomes: &BTreeMap<(StateId, GoalId), ControllerBehavior>,
    start: StateId,
    k: usize,
) -> Result<Rollout, ExtractError> {
    rollout_keys(table, policy, outcomes, start, k).map(|(r, _)| r)
}

/// Builds the k-recurrent grammar that reproduces the policy's rollouts.
///
/// Every policy entry becomes a meta rule (the key's tail is the rule's
/// context); every `(state, goal)` pair gets the `<ACT>` rule matching its
/// controller outcome. The policy must be defined on every history reachable
/// from `start_states`. With `k = 0` and an entry per state the result is
/// also a valid constrained grammar.
pub fn extract_grammar(
    table: &SymbolTable,
    policy: &PolicyMap,
    outcomes: &BTreeMap<(StateId, GoalId), ControllerBehavior>,
    start_states: &[StateId],
    k: usize,
) -> Result<KRecurrentGrammar, ExtractError> {
    if let Some(bad) = policy.keys().find(|key| key.is_empty() || key.len() > k + 1) {
        return Err(ExtractError::BadKey(render_history(table, bad)));
    }
    for s in start_states {
        rollout_keys(table, policy, outcomes, *s, k)?;
    }

    let mut rules = Vec::new();
    let starts: BTreeSet<StateId> = start_states.iter().copied().collect();
    rules.extend(starts.into_iter().map(|state| ProductionRule::Start { state }));
    for (key, goal) in policy {
        rules.push(ProductionRule::Meta {
            state: key[0],
            context: key[1..].to_vec(),
            goal: *goal,
        });
    }
    for state in table.states() {
        for goal in table.goals() {
            rules.push(match outcome(table, outcomes, state, goal)? {
                ControllerBehavior::Reaches(next) => ProductionRule::ActReturn { state, goal, next },
                ControllerBehavior::Terminates => ProductionRule::ActTerminate { state, goal },
                ControllerBehavior::Loops => ProductionRule::ActLoop { state, goal },
            });
        }
    }
    Ok(KRecurrentGrammar::new(table.clone(), k, rules))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{derive, split_trajectory, DerivationResult, RuleSet};

    fn corridor() -> SymbolTable {
        SymbolTable::new(
            ["s1", "s2", "s3", "s4", "s5", "s6"],
            ["g0", "g1", "g2", "g3", "g4", "g5", "g6"],
            "s0",
        )
        .unwrap()
    }

    /// g_i is reached in s_i; g0 terminates.
    fn chain_outcomes(t: &SymbolTable) -> BTreeMap<(StateId, GoalId), ControllerBehavior> {
        let mut m = BTreeMap::new();
        for s in t.states() {
            for g in t.goals() {
                let name = &t.goal_name(g)[1..];
                let b = match t.state(&format!("s{name}")) {
                    Some(next) => ControllerBehavior::Reaches(next),
                    None => ControllerBehavior::Terminates,
                };
                m.insert((s, g), b);
            }
        }
        m
    }

    fn key(t: &SymbolTable, names: &[&str]) -> Vec<StateId> {
        names.iter().map(|n| t.state(n).unwrap()).collect()
    }

    #[test]
    fn two_memory_policy_yields_recurrent_rules() {
        let t = corridor();
        let g = |n: &str| t.goal(n).unwrap();
        let policy: PolicyMap = [
            (key(&t, &["s3"]), g("g6")),
            (key(&t, &["s6", "s3"]), g("g5")),
            (key(&t, &["s5", "s6", "s3"]), g("g6")),
            (key(&t, &["s6", "s5", "s6"]), g("g0")),
        ]
        .into_iter()
        .collect();
        let outcomes = chain_outcomes(&t);
        let s3 = t.state("s3").unwrap();
        let grammar = extract_grammar(&t, &policy, &outcomes, &[s3], 2).unwrap();
        assert!(grammar.validate().is_valid(), "{:?}", grammar.validate());
        let rendered: Vec<String> = grammar.rules().iter().map(|r| r.render(&t)).collect();
        for expected in [
            "S -> s3 <META>",
            "s3 <META> -> s3 g6 <ACT> s3",
            "s6 <META> s3 -> s6 g5 <ACT> s6 s3",
            "s5 <META> s6 s3 -> s5 g6 <ACT> s5 s6 s3",
            "s6 <META> s5 s6 -> s6 g0 <ACT> s6 s5 s6",
            "s6 g5 <ACT> -> s6 g5 s5 <META>",
            "s3 g6 <ACT> -> s3 g6 s6 <META>",
            "s5 g6 <ACT> -> s5 g6 s6 <META>",
            "s6 g0 <ACT> -> s6 g0 s0",
        ] {
            assert!(rendered.iter().any(|r| r == expected), "missing {expected}");
        }
        let res = derive(&grammar, s3, 100).unwrap();
        let (traj, _) = split_trajectory(&t, res.form()).unwrap();
        assert_eq!(traj.to_string(), "s3 g6 s6 g5 s5 g6 s6 g0 s0");
        let r = rollout(&t, &policy, &outcomes, s3, 2).unwrap();
        assert_eq!(r.render(&t), traj.to_string());
    }

    #[test]
    fn undefined_history_is_named() {
        let t = corridor();
        let policy: PolicyMap = [(key(&t, &["s3"]), t.goal("g6").unwrap())].into_iter().collect();
        let err = extract_grammar(&t, &policy, &chain_outcomes(&t), &[t.state("s3").unwrap()], 1).unwrap_err();
        assert_eq!(err, ExtractError::UndefinedHistory("s6 s3".into()));
    }

    #[test]
    fn looping_controller_becomes_act_loop() {
        let t = corridor();
        let (s3, g6) = (t.state("s3").unwrap(), t.goal("g6").unwrap());
        let policy: PolicyMap = [(vec![s3], g6)].into_iter().collect();
        let mut outcomes = chain_outcomes(&t);
        outcomes.insert((s3, g6), ControllerBehavior::Loops);
        let grammar = extract_grammar(&t, &policy, &outcomes, &[s3], 0).unwrap();
        assert!(grammar
            .rules()
            .contains(&ProductionRule::ActLoop { state: s3, goal: g6 }));
        assert!(matches!(
            derive(&grammar, s3, 100).unwrap(),
            DerivationResult::Looping { .. }
        ));
        assert_eq!(rollout(&t, &policy, &outcomes, s3, 0).unwrap().end, RolloutEnd::Loops);
    }

    #[test]
    fn bad_keys_are_rejected() {
        let t = corridor();
        let policy: PolicyMap = [(key(&t, &["s3", "s2"]), t.goal("g6").unwrap())].into_iter().collect();
        assert!(matches!(
            extract_grammar(&t, &policy, &chain_outcomes(&t), &[], 0),
            Err(ExtractError::BadKey(_))
        ));
    }
}
