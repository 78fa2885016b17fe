use super::{NeuralError, Parameterized};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-7;
pub const DEFAULT_LR: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    RmsProp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

/// Per-parameter optimizer state. Moment buffers are sized lazily on the
/// first step and must then always see the same model.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn rmsprop(lr: f64) -> Self {
        Self::new(OptimizerKind::RmsProp, lr)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update step. On a non-finite gradient or update neither the
    /// parameters nor the optimizer state change.
    pub fn apply<M: Parameterized>(
        &mut self,
        params: &mut M,
        grad: &M,
        direction: Direction,
    ) -> Result<(), NeuralError> {
        let g = grad.flatten();
        if g.iter().any(|x| !x.is_finite()) {
            return Err(NeuralError::NonFinite("gradient"));
        }
        let n = g.len();
        if self.m.is_empty() {
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
        }
        assert_eq!(self.m.len(), n, "optimizer used with a different model");

        let sign = match direction {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        };
        let t = self.t + 1;
        let mut m = self.m.clone();
        let mut v = self.v.clone();
        let mut delta = vec![0.0; n];
        match self.kind {
            OptimizerKind::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powi(t as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(t as i32);
                for i in 0..n {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    delta[i] = self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
            OptimizerKind::RmsProp => {
                for i in 0..n {
                    v[i] = RMSPROP_RHO * v[i] + (1.0 - RMSPROP_RHO) * g[i] * g[i];
                    delta[i] = self.lr * g[i] / (v[i].sqrt() + RMSPROP_EPS);
                }
            }
        }
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(NeuralError::NonFinite("update"));
        }
        let mut offset = 0;
        for tensor in params.tensors_mut() {
            for p in tensor.iter_mut() {
                *p += sign * delta[offset];
                offset += 1;
            }
        }
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(())
    }
}

/// Huber loss and its derivative with respect to `pred`.
pub fn huber_loss(pred: f64, target: f64, delta: f64) -> (f64, f64) {
    let err = pred - target;
    if err.abs() <= delta {
        (0.5 * err * err, err)
    } else {
        (delta * (err.abs() - 0.5 * delta), delta * err.signum())
    }
}
