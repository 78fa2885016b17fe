use super::symbols::{GoalId, StateId, Symbol, SymbolTable};

/// One production of a constrained or k-recurrent grammar.
///
/// `Meta::context` lists the previously visited states that must appear
/// immediately right of `<META>`, most recent first. It is empty for
/// constrained grammars.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProductionRule {
    /// `S -> s <META>`
    Start { state: StateId },
    /// `s <META> c -> s g <ACT> s c`
    Meta {
        state: StateId,
        context: Vec<StateId>,
        goal: GoalId,
    },
    /// `s g <ACT> -> s g s' <META>`
    ActReturn {
        state: StateId,
        goal: GoalId,
        next: StateId,
    },
    /// `s g <ACT> -> s g τ`
    ActTerminate { state: StateId, goal: GoalId },
    /// `s g <ACT> -> s g <ACT>`
    ActLoop { state: StateId, goal: GoalId },
}

impl ProductionRule {
    /// The `(state, goal)` pair of an `<ACT>` rule.
    pub fn act_pair(&self) -> Option<(StateId, GoalId)> {
        match *self {
            ProductionRule::ActReturn { state, goal, .. }
            | ProductionRule::ActTerminate { state, goal }
            | ProductionRule::ActLoop { state, goal } => Some((state, goal)),
            _ => None,
        }
    }

    pub fn lhs(&self) -> Vec<Symbol> {
        match self {
            ProductionRule::Start { .. } => vec![Symbol::Start],
            ProductionRule::Meta { state, context, .. } => {
                let mut v = vec![Symbol::State(*state), Symbol::Meta];
                v.extend(context.iter().map(|s| Symbol::State(*s)));
                v
            }
            _ => {
                let (s, g) = self.act_pair().expect("act rule");
                vec![Symbol::State(s), Symbol::Goal(g), Symbol::Act]
            }
        }
    }

    pub fn rhs(&self) -> Vec<Symbol> {
        match self {
            ProductionRule::Start { state } => vec![Symbol::State(*state), Symbol::Meta],
            ProductionRule::Meta { state, context, goal } => {
                let mut v = vec![
                    Symbol::State(*state),
                    Symbol::Goal(*goal),
                    Symbol::Act,
                    Symbol::State(*state),
                ];
                v.extend(context.iter().map(|s| Symbol::State(*s)));
                v
            }
            ProductionRule::ActReturn { state, goal, next } => vec![
                Symbol::State(*state),
                Symbol::Goal(*goal),
                Symbol::State(*next),
                Symbol::Meta,
            ],
            ProductionRule::ActTerminate { state, goal } => {
                vec![Symbol::State(*state), Symbol::Goal(*goal), Symbol::Terminal]
            }
            ProductionRule::ActLoop { state, goal } => {
                vec![Symbol::State(*state), Symbol::Goal(*goal), Symbol::Act]
            }
        }
    }

    /// Renders the rule in the textual grammar format.
    pub fn render(&self, table: &SymbolTable) -> String {
        format!("{} -> {}", table.render(&self.lhs()), table.render(&self.rhs()))
    }

    /// Parses a rule from `lhs -> rhs` form, recognising the shape from the
    /// symbols present and checking that the right side is consistent with
    /// the left.
    pub fn parse(line: &str, table: &SymbolTable) -> Result<Self, String> {
        let (lhs, rhs) = line
            .split_once(super::symbols::ARROW_TOKEN)
            .ok_or_else(|| "missing `->`".to_string())?;
        let lhs = table.parse_symbols(lhs).map_err(|t| format!("unknown symbol `{t}`"))?;
        let rhs = table.parse_symbols(rhs).map_err(|t| format!("unknown symbol `{t}`"))?;
        let rule = match lhs.as_slice() {
            [Symbol::Start] => match rhs.as_slice() {
                [Symbol::State(s), Symbol::Meta] => ProductionRule::Start { state: *s },
                _ => return Err("start rule must have the form `S -> s <META>`".into()),
            },
            [Symbol::State(s), Symbol::Meta, ctx @ ..] => {
                let context = states_of(ctx).ok_or_else(|| "meta context must contain only states".to_string())?;
                let goal = match rhs.get(1) {
                    Some(Symbol::Goal(g)) => *g,
                    _ => return Err("meta rule must select a goal".into()),
                };
                let rule = ProductionRule::Meta {
                    state: *s,
                    context,
                    goal,
                };
                if rule.rhs() != rhs {
                    return Err("meta rule must have the form `s <META> c -> s g <ACT> s c`".into());
                }
                rule
            }
            [Symbol::State(s), Symbol::Goal(g), Symbol::Act] => {
                let (s, g) = (*s, *g);
                let rule = match rhs.as_slice() {
                    [_, _, Symbol::State(next), Symbol::Meta] => ProductionRule::ActReturn {
                        state: s,
                        goal: g,
                        next: *next,
                    },
                    [_, _, Symbol::Terminal] => ProductionRule::ActTerminate { state: s, goal: g },
                    [_, _, Symbol::Act] => ProductionRule::ActLoop { state: s, goal: g },
                    _ => return Err("unrecognised <ACT> rule".into()),
                };
                if rule.rhs() != rhs {
                    return Err("<ACT> rule must keep its `s g` prefix".into());
                }
                rule
            }
            _ => return Err("unrecognised rule shape".into()),
        };
        Ok(rule)
    }
}

fn states_of(symbols: &[Symbol]) -> Option<Vec<StateId>> {
    symbols
        .iter()
        .map(|s| match s {
            Symbol::State(id) => Some(*id),
            _ => None,
        })
        .collect()
}
