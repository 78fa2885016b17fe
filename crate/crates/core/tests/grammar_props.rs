mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhf::grammar::{
    derive, derive_traced, extract_grammar, hf_infeasible, parse_grammar, print_grammar, rollout, split_trajectory,
    DerivationResult, Grammar, RolloutEnd, RuleSet, Symbol,
};

use support::*;

fn grammar(seed: u64) -> rhf::grammar::ConstrainedGrammar {
    random_constrained(&mut ChaCha8Rng::seed_from_u64(seed), 6, 5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_constrained_grammars_validate(seed in any::<u64>()) {
        let g = grammar(seed);
        prop_assert!(g.validate().is_valid(), "{:?}", g.validate());
    }

    #[test]
    fn constrained_trajectories_are_hf_feasible(seed in any::<u64>()) {
        let g = grammar(seed);
        for s in start_states(g.rules()) {
            if let DerivationResult::Completed { string, .. } = derive(&g, s, 1000).unwrap() {
                let (traj, _) = split_trajectory(g.symbols(), &string).unwrap();
                prop_assert_eq!(hf_infeasible(&traj), None);
            }
        }
    }

    #[test]
    fn zero_recurrent_form_derives_identically(seed in any::<u64>()) {
        let g = grammar(seed);
        let z = g.to_zero_recurrent().unwrap();
        prop_assert_eq!(z.k(), 0);
        prop_assert!(z.validate().is_valid());
        for s in start_states(g.rules()) {
            prop_assert_eq!(derive(&g, s, 1000).unwrap(), derive(&z, s, 1000).unwrap());
        }
    }

    #[test]
    fn every_intermediate_form_has_one_nonterminal(seed in any::<u64>()) {
        let g = grammar(seed);
        for s in start_states(g.rules()) {
            let mut forms = Vec::new();
            let res = derive_traced(&g, s, 500, |f| forms.push(f.to_vec())).unwrap();
            let last = forms.len() - 1;
            for (i, f) in forms.iter().enumerate() {
                let n = f.iter().filter(|x| x.is_nonterminal()).count();
                let expected = if i == last && res.is_completed() { 0 } else { 1 };
                prop_assert_eq!(n, expected, "form {} of {}", i, last);
            }
        }
    }

    #[test]
    fn completed_suffix_reverses_consumed_states(seed in any::<u64>()) {
        let g = grammar(seed);
        let t = g.symbols();
        for s in start_states(g.rules()) {
            if let DerivationResult::Completed { string, .. } = derive(&g, s, 1000).unwrap() {
                let (traj, suffix) = split_trajectory(t, &string).unwrap();
                let mut states: Vec<String> = traj.pairs().map(|(s, _)| s.to_string()).collect();
                states.reverse();
                prop_assert_eq!(suffix, states);
            }
        }
    }

    #[test]
    fn derivation_is_deterministic(seed in any::<u64>()) {
        let g = grammar(seed);
        for s in start_states(g.rules()) {
            prop_assert_eq!(derive(&g, s, 300).unwrap(), derive(&g, s, 300).unwrap());
        }
    }

    #[test]
    fn text_format_round_trips(seed in any::<u64>()) {
        let g = Grammar::Constrained(grammar(seed));
        let text = print_grammar(&g);
        prop_assert_eq!(parse_grammar(&text).unwrap(), g);
    }

    #[test]
    fn extraction_reproduces_rollouts(seed in any::<u64>(), k in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = table(rng.random_range(1..=6), rng.random_range(1..=5));
        let outcomes = random_outcomes(&t, &mut rng);
        let start = rhf::grammar::StateId(rng.random_range(0..t.num_states()) as u16);
        let policy = random_recurrent_policy(&t, &outcomes, start, k, &mut rng);
        let g = extract_grammar(&t, &policy, &outcomes, &[start], k).unwrap();
        prop_assert!(g.validate().is_valid(), "{:?}", g.validate());
        let r = rollout(&t, &policy, &outcomes, start, k).unwrap();
        let d = derive(&g, start, 1000).unwrap();
        match r.end {
            RolloutEnd::Terminated => {
                let (traj, _) = split_trajectory(&t, d.form()).unwrap();
                prop_assert_eq!(traj.to_string(), r.render(&t));
            }
            RolloutEnd::Loops => {
                let looping = matches!(d, DerivationResult::Looping { .. });
                prop_assert!(looping, "{:?}", d);
            }
            RolloutEnd::Cycle => {
                let limited = matches!(d, DerivationResult::StepLimit { .. });
                prop_assert!(limited, "{:?}", d);
            }
        }
        // the trajectory prefix agrees in every case
        let prefix: Vec<String> = d
            .form()
            .iter()
            .take_while(|s| !s.is_nonterminal() && **s != Symbol::Terminal)
            .map(|s| t.name(*s).to_string())
            .collect();
        let expected: Vec<String> = r
            .decisions
            .iter()
            .flat_map(|(s, g)| [t.state_name(*s).to_string(), t.goal_name(*g).to_string()])
            .collect();
        let n = prefix.len().min(expected.len());
        prop_assert_eq!(&prefix[..n], &expected[..n]);
    }
}
