use rand::Rng;

use super::policy::softmax;
use super::{check_dim, Matrix, NeuralError, Parameterized, TensorRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

impl Activation {
    fn apply(self, pre: &mut [f64]) {
        match self {
            Activation::Relu => pre.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Linear => {}
            Activation::Softmax => {
                let p = softmax(pre);
                pre.copy_from_slice(&p);
            }
        }
    }

    /// Gradient w.r.t. the pre-activation given the post-activation `out`.
    fn backward(self, out: &[f64], dout: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => out
                .iter()
                .zip(dout)
                .map(|(o, d)| if *o > 0.0 { *d } else { 0.0 })
                .collect(),
            Activation::Linear => dout.to_vec(),
            Activation::Softmax => {
                let dot: f64 = out.iter().zip(dout).map(|(o, d)| o * d).sum();
                out.iter().zip(dout).map(|(o, d)| o * (d - dot)).collect()
            }
        }
    }
}

/// Fully connected layer `y = act(W x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Dense {
            weights: Matrix::glorot(outputs, inputs, rng),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows
    }

    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        self.weights.matvec_acc(x, &mut out);
        out
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.pre_activation(x);
        self.activation.apply(&mut out);
        out
    }

    pub fn forward_cached(&self, x: &[f64]) -> DenseCache {
        DenseCache {
            input: x.to_vec(),
            output: self.forward(x),
        }
    }

    /// Accumulates parameter gradients into `grad` given the gradient of the
    /// pre-activation, and returns the gradient w.r.t. the input.
    pub fn backward_pre(&self, input: &[f64], dpre: &[f64], grad: &mut Dense) -> Vec<f64> {
        grad.weights.add_outer(dpre, input);
        for (b, d) in grad.bias.iter_mut().zip(dpre) {
            *b += d;
        }
        let mut dx = vec![0.0; self.inputs()];
        self.weights.matvec_t_acc(dpre, &mut dx);
        dx
    }

    pub fn backward(&self, cache: &DenseCache, dout: &[f64], grad: &mut Dense) -> Vec<f64> {
        let dpre = self.activation.backward(&cache.output, dout);
        self.backward_pre(&cache.input, &dpre, grad)
    }
}

impl Parameterized for Dense {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            TensorRef {
                name: "weight".into(),
                shape: vec![self.weights.rows, self.weights.cols],
                data: &self.weights.data,
            },
            TensorRef {
                name: "bias".into(),
                shape: vec![self.bias.len()],
                data: &self.bias,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights.data, &mut self.bias]
    }
}

/// Stack of dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

pub type MlpCache = Vec<DenseCache>;

impl Mlp {
    /// `sizes = [in, h1, ..., out]`; hidden layers use ReLU, the last layer
    /// uses `head`.
    pub fn new(sizes: &[usize], head: Activation, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2);
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { head } else { Activation::Relu };
                Dense::new(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        check_dim(self.inputs(), x.len())?;
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.forward(&h);
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<MlpCache, NeuralError> {
        check_dim(self.inputs(), x.len())?;
        let mut caches: MlpCache = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let input = caches.last().map_or(x, |c| &c.output[..]);
            let c = l.forward_cached(input);
            caches.push(c);
        }
        Ok(caches)
    }

    pub fn output(cache: &MlpCache) -> &[f64] {
        &cache.last().unwrap().output
    }

    /// Backpropagates `dout` (gradient w.r.t. the network output).
    pub fn backward(&self, cache: &MlpCache, dout: &[f64], grad: &mut Mlp) -> Vec<f64> {
        let mut d = dout.to_vec();
        for ((l, c), g) in self.layers.iter().zip(cache).zip(&mut grad.layers).rev() {
            d = l.backward(c, &d, g);
        }
        d
    }

    /// Like [`Mlp::backward`] but starting from the gradient of the last
    /// layer's pre-activation (logits).
    pub fn backward_from_logits(&self, cache: &MlpCache, dlogits: &[f64], grad: &mut Mlp) -> Vec<f64> {
        let n = self.layers.len();
        let mut d = self.layers[n - 1].backward_pre(&cache[n - 1].input, dlogits, &mut grad.layers[n - 1]);
        for i in (0..n - 1).rev() {
            d = self.layers[i].backward(&cache[i], &d, &mut grad.layers[i]);
        }
        d
    }
}

impl Parameterized for Mlp {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.tensors().into_iter().map(move |mut t| {
                    t.name = format!("dense{i}.{}", t.name);
                    t
                })
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric_grad<F: Fn(&Mlp) -> f64>(m: &Mlp, f: F) -> Vec<f64> {
        let base = m.flatten();
        let eps = 1e-6;
        (0..base.len())
            .map(|i| {
                let mut p = base.clone();
                p[i] += eps;
                let mut a = m.clone();
                a.set_flat(&p);
                p[i] -= 2.0 * eps;
                let mut b = m.clone();
                b.set_flat(&p);
                (f(&a) - f(&b)) / (2.0 * eps)
            })
            .collect()
    }

    fn assert_close(analytic: &[f64], numeric: &[f64]) {
        for (a, n) in analytic.iter().zip(numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
            assert!(rel < 1e-4 || (a - n).abs() < 1e-8, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for head in [Activation::Linear, Activation::Softmax, Activation::Relu] {
            let mut m = Mlp::new(&[5, 4, 3, 3], head, &mut rng);
            // random biases keep ReLU units away from the kink at zero
            for l in &mut m.layers {
                l.bias.iter_mut().for_each(|b| *b = rng.random_range(0.1..0.5));
            }
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |m: &Mlp| m.forward(&x).unwrap().iter().zip(&w).map(|(o, w)| o * w).sum::<f64>();
            let cache = m.forward_cached(&x).unwrap();
            let mut grad = crate::neural::zeros_like(&m);
            m.backward(&cache, &w, &mut grad);
            assert_close(&grad.flatten(), &numeric_grad(&m, loss));
        }
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dense::new(16, 32, Activation::Relu, &mut rng);
        let a = (6.0f64 / 48.0).sqrt();
        assert!(d.weights.data.iter().all(|w| w.abs() <= a));
        assert!(d.bias.iter().all(|b| *b == 0.0));
        assert_eq!(d.param_count(), 16 * 32 + 32);
    }

    #[test]
    fn dimension_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::new(&[3, 2], Activation::Linear, &mut rng);
        assert_eq!(
            m.forward(&[1.0, 2.0]),
            Err(NeuralError::Dimension { expected: 3, found: 2 })
        );
    }
}
