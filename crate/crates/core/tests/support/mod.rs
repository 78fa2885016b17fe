//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng;
use rhf::env::{Action, Cell, EnvKind, EnvSpec};
use rhf::grammar::{ConstrainedGrammar, ControllerBehavior, GoalId, PolicyMap, ProductionRule, StateId, SymbolTable};
use rhf::neural::Parameterized;

pub fn table(states: usize, goals: usize) -> SymbolTable {
    SymbolTable::new(
        (1..=states).map(|i| format!("s{i}")),
        (0..goals).map(|i| format!("g{i}")),
        "s0",
    )
    .unwrap()
}

pub fn random_outcomes(t: &SymbolTable, rng: &mut impl Rng) -> BTreeMap<(StateId, GoalId), ControllerBehavior> {
    let mut m = BTreeMap::new();
    for s in t.states() {
        for g in t.goals() {
            let u: f64 = rng.random();
            let b = if u < 0.6 {
                ControllerBehavior::Reaches(StateId(rng.random_range(0..t.num_states()) as u16))
            } else if u < 0.9 {
                ControllerBehavior::Terminates
            } else {
                ControllerBehavior::Loops
            };
            m.insert((s, g), b);
        }
    }
    m
}

fn act_rule(state: StateId, goal: GoalId, b: ControllerBehavior) -> ProductionRule {
    match b {
        ControllerBehavior::Reaches(next) => ProductionRule::ActReturn { state, goal, next },
        ControllerBehavior::Terminates => ProductionRule::ActTerminate { state, goal },
        ControllerBehavior::Loops => ProductionRule::ActLoop { state, goal },
    }
}

/// A valid constrained grammar with 1..=`max_states` states and
/// 1..=`max_goals` goals; rule order is shuffled.
pub fn random_constrained(rng: &mut impl Rng, max_states: usize, max_goals: usize) -> ConstrainedGrammar {
    let t = table(rng.random_range(1..=max_states), rng.random_range(1..=max_goals));
    let mut rules = Vec::new();
    let forced = rng.random_range(0..t.num_states());
    for s in t.states() {
        if s.0 as usize == forced || rng.random_bool(0.5) {
            rules.push(ProductionRule::Start { state: s });
        }
        rules.push(ProductionRule::Meta {
            state: s,
            context: Vec::new(),
            goal: GoalId(rng.random_range(0..t.num_goals()) as u16),
        });
    }
    for ((s, g), b) in random_outcomes(&t, rng) {
        rules.push(act_rule(s, g, b));
    }
    for i in (1..rules.len()).rev() {
        rules.swap(i, rng.random_range(0..=i));
    }
    ConstrainedGrammar::new(t, rules)
}

/// States that have a start rule.
pub fn start_states(rules: &[ProductionRule]) -> Vec<StateId> {
    rules
        .iter()
        .filter_map(|r| match r {
            ProductionRule::Start { state } => Some(*state),
            _ => None,
        })
        .collect()
}

/// Rolls out a memory-`k` policy that is a random function of its key and
/// returns the part of it that was consulted.
pub fn random_recurrent_policy(
    t: &SymbolTable,
    outcomes: &BTreeMap<(StateId, GoalId), ControllerBehavior>,
    start: StateId,
    k: usize,
    rng: &mut impl Rng,
) -> PolicyMap {
    let mut f: HashMap<Vec<StateId>, GoalId> = HashMap::new();
    let mut map = PolicyMap::new();
    let mut key = vec![start];
    for _ in 0..200 {
        let goal = *f
            .entry(key.clone())
            .or_insert_with(|| GoalId(rng.random_range(0..t.num_goals()) as u16));
        let seen = map.insert(key.clone(), goal).is_some();
        match outcomes[&(key[0], goal)] {
            ControllerBehavior::Reaches(next) if !seen => {
                key.insert(0, next);
                key.truncate(k + 1);
            }
            _ => break,
        }
    }
    map
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or `‖a − b‖` when both are tiny.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Central-difference gradient of `f` at `model`'s parameters.
pub fn numeric_gradient<M: Parameterized + Clone>(model: &M, h: f64, f: impl Fn(&M) -> f64) -> Vec<f64> {
    let base = model.flatten();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + h;
        probe.set_flat(&p);
        let up = f(&probe);
        p[i] = base[i] - h;
        probe.set_flat(&p);
        let down = f(&probe);
        p[i] = base[i];
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Fewest primitive actions from `from` until a move into the goal's
/// target from a different cell, over intended transitions. Passing through
/// the terminal cell ends the search.
pub fn bfs_distance(spec: &EnvSpec, from: Cell, goal: usize) -> Option<usize> {
    let target = spec.goals[goal].target;
    let mut dist = vec![usize::MAX; spec.num_states()];
    let mut queue = VecDeque::from([from]);
    dist[from.0] = 0;
    while let Some(c) = queue.pop_front() {
        for a in 0..spec.num_actions() {
            let n = spec.intended_next(c, Action(a));
            if n == target && n != c {
                return Some(dist[c.0] + 1);
            }
            if n != spec.terminal && dist[n.0] == usize::MAX {
                dist[n.0] = dist[c.0] + 1;
                queue.push_back(n);
            }
        }
    }
    None
}

/// Whether `needle` occurs in `hay` as a (not necessarily contiguous)
/// subsequence, by trying every choice of positions.
pub fn brute_subsequence<T: PartialEq>(needle: &[T], hay: &[T]) -> bool {
    match needle.split_first() {
        None => true,
        Some((first, rest)) => hay
            .iter()
            .enumerate()
            .any(|(i, h)| h == first && brute_subsequence(rest, &hay[i + 1..])),
    }
}

/// Best expected return in Stochastic Corridor for an agent that knows the
/// cell, the s6 visit count and the time, by backward induction over
/// primitive actions.
pub fn stochastic_corridor_optimum() -> f64 {
    corridor_value(EnvKind::StochasticCorridor, |a, b| a.max(b))
}

/// Expected return of uniformly random primitive actions.
pub fn stochastic_corridor_random() -> f64 {
    corridor_value(EnvKind::StochasticCorridor, |a, b| 0.5 * (a + b))
}

fn corridor_value(kind: EnvKind, combine: impl Fn(f64, f64) -> f64) -> f64 {
    let spec = EnvSpec::new(kind);
    let limit = spec.step_limit;
    let n = spec.num_states();
    // v[t][cell][visits] with visits capped at 2
    let mut next = vec![[0.0f64; 3]; n];
    for t in (0..limit).rev() {
        let mut cur = vec![[0.0f64; 3]; n];
        for c in 1..n {
            for v in 0..3 {
                let mut vals = [0.0; 2];
                for (a, val) in vals.iter_mut().enumerate() {
                    let right = spec.intended_next(Cell(c), Action(1));
                    let left = spec.intended_next(Cell(c), Action(0));
                    let outcomes: Vec<(f64, Cell)> = if a == 0 {
                        vec![(1.0, left)]
                    } else {
                        vec![(0.5, right), (0.5, left)]
                    };
                    for (p, to) in outcomes {
                        let nv = (v + usize::from(c == n - 2 && to.0 == n - 1)).min(2);
                        let r = if to == spec.terminal {
                            if nv >= 2 {
                                1.0
                            } else {
                                0.01
                            }
                        } else if t + 1 >= limit {
                            0.0
                        } else {
                            next[to.0][nv]
                        };
                        *val += p * r;
                    }
                }
                cur[c][v] = combine(vals[0], vals[1]);
            }
        }
        next = cur;
    }
    next[spec.start.0][0]
}
