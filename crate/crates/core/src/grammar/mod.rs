//! Trajectory grammars.
//!
//! A *constrained* grammar encodes a meta controller that picks goals from
//! the current state alone; a *k-recurrent* grammar lets the choice depend on
//! up to `k` previously visited states. Both share the rule representation in
//! [`ProductionRule`]; a constrained grammar is a k-recurrent grammar with
//! `k = 0` and exactly one meta rule per state.

mod derive;
mod extract;
mod rules;
mod symbols;
mod text;
mod trajectory;
mod validate;

pub use derive::{derive, derive_traced, DerivationResult, DeriveError, MissingRule, DEFAULT_MAX_STEPS};
pub use extract::{extract_grammar, rollout, ControllerBehavior, ExtractError, PolicyMap, Rollout, RolloutEnd};
pub use rules::ProductionRule;
pub use symbols::{GoalId, StateId, Symbol, SymbolError, SymbolTable};
pub use text::{parse_grammar, print_grammar, ParseError};
pub use trajectory::{hf_infeasible, split_trajectory, HfWitness, TrajectoryError, TrajectoryString};
pub use validate::{validate_constrained, validate_k_recurrent, ValidationReport, Violation, Warning};

/// Read access shared by both grammar kinds.
pub trait RuleSet {
    fn symbols(&self) -> &SymbolTable;
    fn rules(&self) -> &[ProductionRule];
}

/// A grammar whose meta rules carry no context: one goal per state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstrainedGrammar {
    symbols: SymbolTable,
    rules: Vec<ProductionRule>,
}

/// A grammar whose meta rules may look at up to `k` previously visited
/// states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KRecurrentGrammar {
    symbols: SymbolTable,
    k: usize,
    rules: Vec<ProductionRule>,
}

impl ConstrainedGrammar {
    /// Builds the grammar without validating it; see [`Self::validate`].
    pub fn new(symbols: SymbolTable, rules: Vec<ProductionRule>) -> Self {
        ConstrainedGrammar { symbols, rules }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_constrained(self)
    }

    /// Reinterprets a valid constrained grammar as a 0-recurrent one.
    ///
    /// The rule set is carried over unchanged: context-free meta rules are
    /// exactly 0-recurrent meta rules.
    pub fn to_zero_recurrent(&self) -> Result<KRecurrentGrammar, ValidationReport> {
        let report = self.validate();
        if !report.is_valid() {
            return Err(report);
        }
        Ok(KRecurrentGrammar::new(self.symbols.clone(), 0, self.rules.clone()))
    }
}

impl KRecurrentGrammar {
    pub fn new(symbols: SymbolTable, k: usize, rules: Vec<ProductionRule>) -> Self {
        KRecurrentGrammar { symbols, k, rules }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn validate(&self) -> ValidationReport {
        validate_k_recurrent(self)
    }

    /// Narrows a 0-recurrent grammar to a constrained one when every state
    /// has exactly one meta rule.
    pub fn into_constrained(self) -> Result<ConstrainedGrammar, ValidationReport> {
        let g = ConstrainedGrammar::new(self.symbols, self.rules);
        let report = g.validate();
        if report.is_valid() {
            Ok(g)
        } else {
            Err(report)
        }
    }
}

impl RuleSet for ConstrainedGrammar {
    fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }
    fn rules(&self) -> &[ProductionRule] {
        &self.rules
    }
}

impl RuleSet for KRecurrentGrammar {
    fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }
    fn rules(&self) -> &[ProductionRule] {
        &self.rules
    }
}

/// Either grammar kind, as read from the textual format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Grammar {
    Constrained(ConstrainedGrammar),
    KRecurrent(KRecurrentGrammar),
}

impl Grammar {
    pub fn validate(&self) -> ValidationReport {
        match self {
            Grammar::Constrained(g) => g.validate(),
            Grammar::KRecurrent(g) => g.validate(),
        }
    }
}

impl RuleSet for Grammar {
    fn symbols(&self) -> &SymbolTable {
        match self {
            Grammar::Constrained(g) => g.symbols(),
            Grammar::KRecurrent(g) => g.symbols(),
        }
    }
    fn rules(&self) -> &[ProductionRule] {
        match self {
            Grammar::Constrained(g) => g.rules(),
            Grammar::KRecurrent(g) => g.rules(),
        }
    }
}
