//! A small differentiable stack for the fixed architectures used here:
//! dense layers, a GRU cell, softmax policy heads with backpropagation
//! through time, Adam and RMSprop, Huber loss and text checkpoints.
//!
//! Everything is double precision. Gradients are stored in a value of the
//! model's own type (all parameters zeroed, then accumulated), so optimizers
//! and checkpoints only need the [`Parameterized`] view.

mod checkpoint;
mod dense;
mod gru;
mod optim;
mod policy;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_HEADER};
pub use dense::{Activation, Dense, DenseCache, Mlp, MlpCache};
pub use gru::{GruCell, GruStep};
pub use optim::{huber_loss, Direction, Optimizer, OptimizerKind, DEFAULT_LR};
pub use policy::{
    bptt_policy_gradient, log_softmax, softmax, EpisodeTape, FeedforwardPolicy, RecurrentPolicy, TapeEntry,
};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<(), NeuralError> {
    if expected == found {
        Ok(())
    } else {
        Err(NeuralError::Dimension { expected, found })
    }
}

/// Borrowed view of one named parameter tensor.
#[derive(Debug)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Models that expose their parameters as an ordered list of tensors.
pub trait Parameterized {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    /// Same order as [`Parameterized::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut rest = values;
        for t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        assert!(rest.is_empty(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s.data) {
                *d += scale * v;
            }
        }
    }
}

/// A same-shaped copy with every parameter zero, for gradient accumulation.
pub fn zeros_like<M: Parameterized + Clone>(model: &M) -> M {
    let mut z = model.clone();
    z.fill(0.0);
    z
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Glorot/Xavier uniform: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-a..a)).collect(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out += self · x`
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// `out += selfᵀ · y`
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        for (yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if *yi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += yi * w;
            }
        }
    }

    /// `self += y · xᵀ`
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        let cols = self.cols;
        for (yi, row) in y.iter().zip(self.data.chunks_exact_mut(cols)) {
            if *yi == 0.0 {
                continue;
            }
            for (w, xj) in row.iter_mut().zip(x) {
                *w += yi * xj;
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
