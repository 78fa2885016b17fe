use std::collections::BTreeMap;

use thiserror::Error;

use super::{MetaController, MetaError};
use crate::controller::{goal_achieved, Controller};
use crate::env::{Cell, EnvSpec};
use crate::grammar::{ControllerBehavior, GoalId, PolicyMap, StateId, SymbolTable};

/// Numbering of an environment's non-terminal cells as grammar states.
#[derive(Clone, Debug)]
pub struct StateIndex {
    cells: Vec<Cell>,
    ids: Vec<Option<StateId>>,
}

impl StateIndex {
    pub fn new(spec: &EnvSpec) -> Self {
        let cells: Vec<Cell> = spec.nonterminal_cells().collect();
        let mut ids = vec![None; spec.num_states()];
        for (i, c) in cells.iter().enumerate() {
            ids[c.0] = Some(StateId(i as u16));
        }
        StateIndex { cells, ids }
    }

    pub fn state(&self, cell: Cell) -> Option<StateId> {
        self.ids[cell.0]
    }

    pub fn cell(&self, state: StateId) -> Cell {
        self.cells[state.0 as usize]
    }
}

/// Grammar symbols for an environment: its non-terminal cells, its goals and
/// its terminal cell.
pub fn symbol_table(spec: &EnvSpec) -> SymbolTable {
    SymbolTable::new(
        spec.nonterminal_cells().map(|c| spec.state_names[c.0].clone()),
        spec.goals.iter().map(|g| g.name.clone()),
        spec.state_names[spec.terminal.0].clone(),
    )
    .expect("environment names form a valid symbol table")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyMapError {
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error("history `{key}` needs both {first} and {second}; memory k = {k} is too short")]
    Conflict {
        key: String,
        first: String,
        second: String,
        k: usize,
    },
    #[error("policy made {0} decisions without terminating")]
    Looping(usize),
}

/// Where the controller ends up for every `(state, goal)` pair, following its
/// greedy actions on the intended transitions.
pub fn controller_behaviors(
    spec: &EnvSpec,
    controller: &dyn Controller,
) -> BTreeMap<(StateId, GoalId), ControllerBehavior> {
    let index = StateIndex::new(spec);
    let cap = spec.num_states() * spec.num_actions();
    let mut out = BTreeMap::new();
    for start in spec.nonterminal_cells() {
        for (g, goal) in spec.goals.iter().enumerate() {
            let mut cur = start;
            let mut behavior = ControllerBehavior::Loops;
            for _ in 0..cap {
                let Ok(a) = controller.greedy(&spec.observe(cur), g) else {
                    break;
                };
                let next = spec.intended_next(cur, a);
                if next == spec.terminal {
                    behavior = ControllerBehavior::Terminates;
                    break;
                }
                if goal_achieved(goal.target, cur, next) {
                    behavior = ControllerBehavior::Reaches(index.state(next).unwrap());
                    break;
                }
                cur = next;
            }
            out.insert((index.state(start).unwrap(), GoalId(g as u16)), behavior);
        }
    }
    out
}

/// Reads a deterministic goal policy off a meta controller.
///
/// Feedforward controllers are evaluated on every non-terminal state. The
/// recurrent one is rolled out greedily from the start state with the full
/// history, and each decision is recorded under the `k + 1` most recent
/// states; two decisions that collide on a key are an error.
pub fn deterministic_policy_map(
    meta: &dyn MetaController,
    spec: &EnvSpec,
    behaviors: &BTreeMap<(StateId, GoalId), ControllerBehavior>,
    k: usize,
) -> Result<PolicyMap, PolicyMapError> {
    let index = StateIndex::new(spec);
    let mut map = PolicyMap::new();
    if !meta.kind().is_recurrent() {
        for cell in spec.nonterminal_cells() {
            let g = meta.greedy_goal(&[spec.observe(cell)])?;
            map.insert(vec![index.state(cell).unwrap()], GoalId(g as u16));
        }
        return Ok(map);
    }

    let table = symbol_table(spec);
    let mut history = vec![spec.start];
    for _ in 0..spec.step_limit {
        let observed: Vec<_> = history.iter().map(|c| spec.observe(*c)).collect();
        let goal = GoalId(meta.greedy_goal(&observed)? as u16);
        let key: Vec<StateId> = history
            .iter()
            .rev()
            .take(k + 1)
            .map(|c| index.state(*c).unwrap())
            .collect();
        if let Some(prev) = map.get(&key) {
            if *prev != goal {
                return Err(PolicyMapError::Conflict {
                    key: key.iter().map(|s| table.state_name(*s)).collect::<Vec<_>>().join(" "),
                    first: table.goal_name(*prev).into(),
                    second: table.goal_name(goal).into(),
                    k,
                });
            }
        }
        map.insert(key.clone(), goal);
        match behaviors[&(key[0], goal)] {
            ControllerBehavior::Reaches(next) => history.push(index.cell(next)),
            ControllerBehavior::Terminates | ControllerBehavior::Loops => return Ok(map),
        }
    }
    Err(PolicyMapError::Looping(spec.step_limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::OptimalController;
    use crate::env::EnvKind;
    use crate::env::EnvState;
    use crate::meta::{HReinforce, MetaParams, SelectMode};

    /// Scripted recurrent policy: picks goals by history length.
    struct Scripted(Vec<usize>);

    impl MetaController for Scripted {
        fn kind(&self) -> crate::meta::SystemKind {
            crate::meta::SystemKind::RhReinforce
        }
        fn begin_episode(&mut self) {}
        fn select_goal(&mut self, _: &EnvState, _: SelectMode) -> Result<usize, MetaError> {
            unimplemented!()
        }
        fn record(&mut self, _: f64, _: &EnvState, _: bool) -> Result<(), MetaError> {
            Ok(())
        }
        fn end_episode(&mut self, _: bool) -> Result<(), MetaError> {
            Ok(())
        }
        fn greedy_goal(&self, history: &[EnvState]) -> Result<usize, MetaError> {
            Ok(self.0[(history.len() - 1).min(self.0.len() - 1)])
        }
        fn save(&self) -> String {
            String::new()
        }
        fn load(&mut self, _: &str) -> Result<(), MetaError> {
            Ok(())
        }
    }

    fn setup() -> (EnvSpec, BTreeMap<(StateId, GoalId), ControllerBehavior>, SymbolTable) {
        let spec = EnvSpec::new(EnvKind::Corridor);
        let b = controller_behaviors(&spec, &OptimalController::new(&spec));
        (spec.clone(), b, symbol_table(&spec))
    }

    fn render(map: &PolicyMap, t: &SymbolTable) -> Vec<String> {
        map.iter()
            .map(|(k, g)| {
                let k: Vec<_> = k.iter().map(|s| t.state_name(*s)).collect();
                format!("{} -> {}", k.join(" "), t.goal_name(*g))
            })
            .collect()
    }

    #[test]
    fn corridor_behaviors() {
        let (_, b, t) = setup();
        let s = |n: &str| t.state(n).unwrap();
        let g = |n: &str| t.goal(n).unwrap();
        assert_eq!(b[&(s("s3"), g("g6"))], ControllerBehavior::Reaches(s("s6")));
        assert_eq!(b[&(s("s6"), g("g6"))], ControllerBehavior::Reaches(s("s6")));
        assert_eq!(b[&(s("s6"), g("g0"))], ControllerBehavior::Terminates);
        assert_eq!(b.len(), 6 * 7);
    }

    #[test]
    fn recurrent_map_with_two_states_of_memory() {
        let (spec, b, t) = setup();
        let m = Scripted(vec![6, 5, 6, 0]);
        let map = deterministic_policy_map(&m, &spec, &b, 2).unwrap();
        assert_eq!(
            render(&map, &t),
            ["s3 -> g6", "s5 s6 s3 -> g6", "s6 s3 -> g5", "s6 s5 s6 -> g0"]
        );
        // one state of memory cannot tell the two visits to s6 apart
        let err = deterministic_policy_map(&m, &spec, &b, 0).unwrap_err();
        assert!(matches!(err, PolicyMapError::Conflict { k: 0, .. }), "{err}");
    }

    #[test]
    fn looping_policy_is_reported() {
        let (spec, b, _) = setup();
        let m = Scripted(vec![6, 5, 6, 5, 6, 5, 6, 5, 6, 5, 6, 5, 6, 5, 6, 5, 6, 5, 6, 5, 6, 5]);
        assert_eq!(
            deterministic_policy_map(&m, &spec, &b, 25),
            Err(PolicyMapError::Looping(20))
        );
    }

    #[test]
    fn feedforward_map_is_total_over_states() {
        let (spec, b, _) = setup();
        let m = HReinforce::new(7, 7, &MetaParams::default(), 1);
        let map = deterministic_policy_map(&m, &spec, &b, 0).unwrap();
        assert_eq!(map.len(), 6);
        assert!(map.keys().all(|k| k.len() == 1));
    }
}
