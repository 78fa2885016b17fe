use rand::Rng;

use super::{check_dim, sigmoid, Matrix, NeuralError, Parameterized, TensorRef};

/// Gated recurrent unit:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// n  = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = z ⊙ h + (1 - z) ⊙ n
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Vec<f64>,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Vec<f64>,
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Vec<f64>,
}

/// Activations of one step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GruStep {
    pub input: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub h: Vec<f64>,
}

impl GruCell {
    pub fn new(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        GruCell {
            w_z: Matrix::glorot(hidden, inputs, rng),
            u_z: Matrix::glorot(hidden, hidden, rng),
            b_z: vec![0.0; hidden],
            w_r: Matrix::glorot(hidden, inputs, rng),
            u_r: Matrix::glorot(hidden, hidden, rng),
            b_r: vec![0.0; hidden],
            w_h: Matrix::glorot(hidden, inputs, rng),
            u_h: Matrix::glorot(hidden, hidden, rng),
            b_h: vec![0.0; hidden],
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_z.cols
    }

    pub fn hidden(&self) -> usize {
        self.w_z.rows
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.hidden()]
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> Result<GruStep, NeuralError> {
        check_dim(self.inputs(), x.len())?;
        check_dim(self.hidden(), h.len())?;
        let gate = |w: &Matrix, u: &Matrix, b: &[f64], hv: &[f64]| {
            let mut out = b.to_vec();
            w.matvec_acc(x, &mut out);
            u.matvec_acc(hv, &mut out);
            out
        };
        let z: Vec<f64> = gate(&self.w_z, &self.u_z, &self.b_z, h)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = gate(&self.w_r, &self.u_r, &self.b_r, h)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let n: Vec<f64> = gate(&self.w_h, &self.u_h, &self.b_h, &rh)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h_new = (0..h.len()).map(|i| z[i] * h[i] + (1.0 - z[i]) * n[i]).collect();
        Ok(GruStep {
            input: x.to_vec(),
            h_prev: h.to_vec(),
            z,
            r,
            n,
            h: h_new,
        })
    }

    /// Accumulates parameter gradients for one step given `dh` (the gradient
    /// w.r.t. the step's output state). Returns the gradient w.r.t. the
    /// previous hidden state.
    pub fn backward(&self, step: &GruStep, dh: &[f64], grad: &mut GruCell) -> Vec<f64> {
        let hn = self.hidden();
        let (h, z, r, n) = (&step.h_prev, &step.z, &step.r, &step.n);
        let mut dh_prev: Vec<f64> = (0..hn).map(|i| dh[i] * z[i]).collect();
        let dz_pre: Vec<f64> = (0..hn).map(|i| dh[i] * (h[i] - n[i]) * z[i] * (1.0 - z[i])).collect();
        let dn_pre: Vec<f64> = (0..hn).map(|i| dh[i] * (1.0 - z[i]) * (1.0 - n[i] * n[i])).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();

        grad.w_h.add_outer(&dn_pre, &step.input);
        grad.u_h.add_outer(&dn_pre, &rh);
        add(&mut grad.b_h, &dn_pre);
        let mut drh = vec![0.0; hn];
        self.u_h.matvec_t_acc(&dn_pre, &mut drh);
        let dr_pre: Vec<f64> = (0..hn).map(|i| drh[i] * h[i] * r[i] * (1.0 - r[i])).collect();
        for i in 0..hn {
            dh_prev[i] += drh[i] * r[i];
        }

        grad.w_z.add_outer(&dz_pre, &step.input);
        grad.u_z.add_outer(&dz_pre, h);
        add(&mut grad.b_z, &dz_pre);
        grad.w_r.add_outer(&dr_pre, &step.input);
        grad.u_r.add_outer(&dr_pre, h);
        add(&mut grad.b_r, &dr_pre);
        self.u_z.matvec_t_acc(&dz_pre, &mut dh_prev);
        self.u_r.matvec_t_acc(&dr_pre, &mut dh_prev);
        dh_prev
    }
}

fn add(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn mat<'a>(name: &str, m: &'a Matrix) -> TensorRef<'a> {
    TensorRef {
        name: name.into(),
        shape: vec![m.rows, m.cols],
        data: &m.data,
    }
}

fn vector<'a>(name: &str, v: &'a [f64]) -> TensorRef<'a> {
    TensorRef {
        name: name.into(),
        shape: vec![v.len()],
        data: v,
    }
}

impl Parameterized for GruCell {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            mat("w_z", &self.w_z),
            mat("u_z", &self.u_z),
            vector("b_z", &self.b_z),
            mat("w_r", &self.w_r),
            mat("u_r", &self.u_r),
            vector("b_r", &self.b_r),
            mat("w_h", &self.w_h),
            mat("u_h", &self.u_h),
            vector("b_h", &self.b_h),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w_z.data,
            &mut self.u_z.data,
            &mut self.b_z,
            &mut self.w_r.data,
            &mut self.u_r.data,
            &mut self.b_r,
            &mut self.w_h.data,
            &mut self.u_h.data,
            &mut self.b_h,
        ]
    }
}
