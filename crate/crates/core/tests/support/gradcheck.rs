//! Finite-difference checks; each returns the relative error of an analytic
//! gradient for one random instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhf::controller::{ActorCritic, Transition};
use rhf::env::{Action, Cell, EnvKind, EnvSpec};
use rhf::neural::{
    bptt_policy_gradient, log_softmax, zeros_like, Activation, Dense, EpisodeTape, FeedforwardPolicy, GruCell,
    Parameterized, RecurrentPolicy, TapeEntry,
};

use super::{numeric_gradient, rel_error};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

fn vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn one_hot(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[rng.random_range(0..n)] = 1.0;
    v
}

/// Dense layer under a random linear read-out.
pub fn dense_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, o) = (rng.random_range(1..6), rng.random_range(1..6));
    let act = [Activation::Relu, Activation::Linear, Activation::Softmax][rng.random_range(0..3)];
    let mut layer = Dense::new(i, o, act, &mut rng);
    for b in &mut layer.bias {
        *b = rng.random_range(-0.5..0.5);
    }
    let x = vector(&mut rng, i);
    let w = vector(&mut rng, o);
    let loss = |d: &Dense| d.forward(&x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let mut grad = zeros_like(&layer);
    layer.backward(&layer.forward_cached(&x), &w, &mut grad);
    rel_error(&grad.flatten(), &numeric_gradient(&layer, H, loss))
}

/// Five GRU steps under a random linear read-out of every hidden state.
pub fn gru_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, h) = (rng.random_range(1..5), rng.random_range(1..6));
    let cell = GruCell::new(i, h, &mut rng);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| vector(&mut rng, i)).collect();
    let ws: Vec<Vec<f64>> = (0..5).map(|_| vector(&mut rng, h)).collect();
    let loss = |c: &GruCell| {
        let mut state = c.initial_state();
        let mut total = 0.0;
        for (x, w) in xs.iter().zip(&ws) {
            state = c.step(x, &state).unwrap().h;
            total += state.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
        total
    };
    let mut steps = Vec::new();
    let mut state = cell.initial_state();
    for x in &xs {
        let s = cell.step(x, &state).unwrap();
        state = s.h.clone();
        steps.push(s);
    }
    let mut grad = zeros_like(&cell);
    let mut carry = vec![0.0; h];
    for t in (0..5).rev() {
        let dh: Vec<f64> = ws[t].iter().zip(&carry).map(|(a, b)| a + b).collect();
        carry = cell.backward(&steps[t], &dh, &mut grad);
    }
    rel_error(&grad.flatten(), &numeric_gradient(&cell, H, loss))
}

/// `Σ_t G_t ∇ ln π(g_t | history)` for the recurrent policy.
pub fn recurrent_policy_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, h, o) = (rng.random_range(2..8), rng.random_range(2..10), rng.random_range(2..8));
    let policy = RecurrentPolicy::new(i, h, o, &mut rng);
    let len = rng.random_range(1..7);
    let inputs: Vec<Vec<f64>> = (0..len).map(|_| one_hot(&mut rng, i)).collect();
    let choices: Vec<usize> = (0..len).map(|_| rng.random_range(0..o)).collect();
    let returns: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |p: &RecurrentPolicy| {
        let mut state = p.initial_state();
        let mut total = 0.0;
        for t in 0..len {
            let (next, logits) = p.step(&inputs[t], &state).unwrap();
            state = next;
            total += returns[t] * log_softmax(&logits)[choices[t]];
        }
        total
    };
    let mut tape = EpisodeTape::default();
    let mut state = policy.initial_state();
    for t in 0..len {
        let (next, logits) = policy.step(&inputs[t], &state).unwrap();
        tape.entries.push(TapeEntry {
            input: inputs[t].clone(),
            hidden: std::mem::replace(&mut state, next),
            logits,
            choice: choices[t],
        });
    }
    let grad = bptt_policy_gradient(&policy, &tape, &returns).unwrap();
    rel_error(&grad.flatten(), &numeric_gradient(&policy, H, objective))
}

/// Same objective for the feedforward policy.
pub fn feedforward_policy_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, o) = (rng.random_range(2..8), rng.random_range(2..8));
    let mut policy = FeedforwardPolicy::new(i, o, &mut rng);
    for layer in &mut policy.net.layers {
        for b in &mut layer.bias {
            *b = rng.random_range(0.05..0.3);
        }
    }
    let len = rng.random_range(1..7);
    let inputs: Vec<Vec<f64>> = (0..len).map(|_| one_hot(&mut rng, i)).collect();
    let choices: Vec<usize> = (0..len).map(|_| rng.random_range(0..o)).collect();
    let returns: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |p: &FeedforwardPolicy| {
        (0..len)
            .map(|t| returns[t] * p.probs(&inputs[t]).unwrap()[choices[t]].ln())
            .sum::<f64>()
    };
    let grad = policy.policy_gradient(&inputs, &choices, &returns).unwrap();
    rel_error(&grad.flatten(), &numeric_gradient(&policy, H, objective))
}

/// Actor term `δ ∇ ln π_a` and critic term `-δ ∇ v` (the gradient of `½ δ²`
/// with `v(s')` held fixed), on a random Corridor or Grid transition.
pub fn actor_critic_errors(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = [EnvKind::Corridor, EnvKind::Grid][rng.random_range(0..2)];
    let spec = EnvSpec::new(kind);
    let mut ac = ActorCritic::new(&spec, 0.001, seed);
    for net in [&mut ac.actor.net, &mut ac.critic] {
        for layer in &mut net.layers {
            for b in &mut layer.bias {
                *b = rng.random_range(0.05..0.3);
            }
        }
    }
    let cells: Vec<Cell> = spec.nonterminal_cells().collect();
    let state = spec.observe(cells[rng.random_range(0..cells.len())]);
    let next = spec.observe(cells[rng.random_range(0..cells.len())]);
    let goal = rng.random_range(0..spec.num_goals());
    let action = Action(rng.random_range(0..spec.num_actions()));
    let end = rng.random_bool(0.3);
    let intrinsic = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
    let t = Transition {
        state: &state,
        goal,
        action,
        next: &next,
        intrinsic,
        end,
    };
    let grads = ac.gradients(&t).unwrap();

    let x = ac.input(&state, goal);
    let v_next = if end { 0.0 } else { ac.value(&next, goal).unwrap() };
    let delta = intrinsic + ac.gamma * v_next - ac.value(&state, goal).unwrap();
    assert!((delta - grads.delta).abs() < 1e-12);

    let actor_obj = |p: &FeedforwardPolicy| delta * p.probs(&x).unwrap()[action.0].ln();
    let actor = rel_error(&grads.actor.flatten(), &numeric_gradient(&ac.actor, H, actor_obj));

    let target = intrinsic + ac.gamma * v_next;
    let critic_obj = |c: &rhf::neural::Mlp| {
        let d = target - c.forward(&x).unwrap()[0];
        0.5 * d * d
    };
    let critic = rel_error(&grads.critic.flatten(), &numeric_gradient(&ac.critic, H, critic_obj));
    (actor, critic)
}
