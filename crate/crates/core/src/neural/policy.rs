use rand::Rng;

use super::{check_dim, zeros_like, Activation, Dense, GruCell, GruStep, Mlp, NeuralError, Parameterized, TensorRef};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// `scale · ∂ ln softmax(logits)[index] / ∂ logits = scale · (onehot − p)`.
fn log_prob_logit_grad(probs: &[f64], index: usize, scale: f64) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, p)| scale * (if i == index { 1.0 } else { 0.0 } - p))
        .collect()
}

/// Feedforward softmax policy over a discrete action or goal set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedforwardPolicy {
    pub net: Mlp,
}

impl FeedforwardPolicy {
    /// `inputs → 16 → 32 → outputs` with ReLU hidden layers.
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        FeedforwardPolicy {
            net: Mlp::new(&[inputs, 16, 32, outputs], Activation::Softmax, rng),
        }
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.net.forward(x)
    }

    /// Adds `scale · ∇ ln π(index | x)` into `grad`.
    pub fn accumulate_log_prob_grad(
        &self,
        x: &[f64],
        index: usize,
        scale: f64,
        grad: &mut FeedforwardPolicy,
    ) -> Result<(), NeuralError> {
        let cache = self.net.forward_cached(x)?;
        let d = log_prob_logit_grad(Mlp::output(&cache), index, scale);
        self.net.backward_from_logits(&cache, &d, &mut grad.net);
        Ok(())
    }

    /// `Σ_t G_t ∇ ln π(a_t | x_t)`.
    pub fn policy_gradient(
        &self,
        inputs: &[Vec<f64>],
        choices: &[usize],
        returns: &[f64],
    ) -> Result<FeedforwardPolicy, NeuralError> {
        check_dim(inputs.len(), returns.len())?;
        check_dim(inputs.len(), choices.len())?;
        let mut grad = zeros_like(self);
        for ((x, a), g) in inputs.iter().zip(choices).zip(returns) {
            if *g != 0.0 {
                self.accumulate_log_prob_grad(x, *a, *g, &mut grad)?;
            }
        }
        if !grad.all_finite() {
            return Err(NeuralError::NonFinite("policy gradient"));
        }
        Ok(grad)
    }
}

impl Parameterized for FeedforwardPolicy {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        self.net.tensors()
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.tensors_mut()
    }
}

/// GRU layer followed by a softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentPolicy {
    pub gru: GruCell,
    pub head: Dense,
}

/// One forward step of a recurrent policy as recorded during an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct TapeEntry {
    pub input: Vec<f64>,
    /// Hidden state before this step.
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub choice: usize,
}

/// Everything needed to re-run an episode's forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeTape {
    pub entries: Vec<TapeEntry>,
}

impl EpisodeTape {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl RecurrentPolicy {
    pub fn new(inputs: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        RecurrentPolicy {
            gru: GruCell::new(inputs, hidden, rng),
            head: Dense::new(hidden, outputs, Activation::Softmax, rng),
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.gru.initial_state()
    }

    /// Advances the hidden state on `x` and returns `(new hidden, logits)`.
    pub fn step(&self, x: &[f64], h: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
        let s = self.gru.step(x, h)?;
        let logits = self.head.pre_activation(&s.h);
        Ok((s.h, logits))
    }
}

impl Parameterized for RecurrentPolicy {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let gru = self.gru.tensors().into_iter().map(|mut t| {
            t.name = format!("gru.{}", t.name);
            t
        });
        let head = self.head.tensors().into_iter().map(|mut t| {
            t.name = format!("head.{}", t.name);
            t
        });
        gru.chain(head).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.gru.tensors_mut();
        v.extend(self.head.tensors_mut());
        v
    }
}

/// `Σ_t G_t ∇ ln π(g_t | x_0..x_t)` by backpropagation through time.
///
/// The forward pass is re-run from the zero hidden state over the tape's
/// inputs, so the result does not depend on the recorded activations.
pub fn bptt_policy_gradient(
    policy: &RecurrentPolicy,
    tape: &EpisodeTape,
    returns: &[f64],
) -> Result<RecurrentPolicy, NeuralError> {
    check_dim(tape.len(), returns.len())?;
    let mut steps: Vec<GruStep> = Vec::with_capacity(tape.len());
    let mut h = policy.initial_state();
    for e in &tape.entries {
        let s = policy.gru.step(&e.input, &h)?;
        h = s.h.clone();
        steps.push(s);
    }

    let mut grad = zeros_like(policy);
    let mut dh_next = vec![0.0; policy.gru.hidden()];
    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let probs = softmax(&policy.head.pre_activation(&s.h));
        let dlogits = log_prob_logit_grad(&probs, tape.entries[t].choice, returns[t]);
        let mut dh = policy.head.backward_pre(&s.h, &dlogits, &mut grad.head);
        for (a, b) in dh.iter_mut().zip(&dh_next) {
            *a += b;
        }
        dh_next = policy.gru.backward(s, &dh, &mut grad.gru);
    }
    if !grad.all_finite() {
        return Err(NeuralError::NonFinite("policy gradient"));
    }
    Ok(grad)
}
