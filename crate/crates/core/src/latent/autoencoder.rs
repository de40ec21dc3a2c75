//! Symmetric single-hidden-layer autoencoder with hand-written backprop.
//!
//! Encoder: `P -> HD (ELU) -> M (linear)`. Decoder: `M -> HD (ELU) -> P (linear)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::numkit::Matrix;
use crate::policy::glorot_normal;

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// ELU derivative, taking the value 1 at `x = 0`.
#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Weights are stored `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    pub enc_hidden_w: Array2<f64>,
    pub enc_hidden_b: Array1<f64>,
    pub enc_latent_w: Array2<f64>,
    pub enc_latent_b: Array1<f64>,
    pub dec_hidden_w: Array2<f64>,
    pub dec_hidden_b: Array1<f64>,
    pub dec_output_w: Array2<f64>,
    pub dec_output_b: Array1<f64>,
}

/// Intermediate values of a batched forward pass, rows are samples.
pub(crate) struct Activations {
    enc_pre: Array2<f64>,
    enc_hidden: Array2<f64>,
    latent: Array2<f64>,
    dec_pre: Array2<f64>,
    dec_hidden: Array2<f64>,
    pub(crate) output: Array2<f64>,
}

impl AeParams {
    pub fn zeros(param_dim: usize, hidden_dim: usize, latent_dim: usize) -> Self {
        Self {
            enc_hidden_w: Array2::zeros((hidden_dim, param_dim)),
            enc_hidden_b: Array1::zeros(hidden_dim),
            enc_latent_w: Array2::zeros((latent_dim, hidden_dim)),
            enc_latent_b: Array1::zeros(latent_dim),
            dec_hidden_w: Array2::zeros((hidden_dim, latent_dim)),
            dec_hidden_b: Array1::zeros(hidden_dim),
            dec_output_w: Array2::zeros((param_dim, hidden_dim)),
            dec_output_b: Array1::zeros(param_dim),
        }
    }

    /// Glorot-normal weights and zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        param_dim: usize,
        hidden_dim: usize,
        latent_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut layer = |fan_in: usize, fan_out: usize| {
            Array2::from_shape_vec((fan_out, fan_in), glorot_normal(fan_in, fan_out, rng))
                .expect("glorot shape")
        };
        let enc_hidden_w = layer(param_dim, hidden_dim);
        let enc_latent_w = layer(hidden_dim, latent_dim);
        let dec_hidden_w = layer(latent_dim, hidden_dim);
        let dec_output_w = layer(hidden_dim, param_dim);
        Self {
            enc_hidden_w,
            enc_hidden_b: Array1::zeros(hidden_dim),
            enc_latent_w,
            enc_latent_b: Array1::zeros(latent_dim),
            dec_hidden_w,
            dec_hidden_b: Array1::zeros(hidden_dim),
            dec_output_w,
            dec_output_b: Array1::zeros(param_dim),
        }
    }

    pub fn param_dim(&self) -> usize {
        self.enc_hidden_w.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.enc_hidden_w.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.enc_latent_w.nrows()
    }

    /// Number of trainable scalars.
    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tensors(&self) -> [&[f64]; 8] {
        [
            self.enc_hidden_w.as_slice().expect("contiguous"),
            self.enc_hidden_b.as_slice().expect("contiguous"),
            self.enc_latent_w.as_slice().expect("contiguous"),
            self.enc_latent_b.as_slice().expect("contiguous"),
            self.dec_hidden_w.as_slice().expect("contiguous"),
            self.dec_hidden_b.as_slice().expect("contiguous"),
            self.dec_output_w.as_slice().expect("contiguous"),
            self.dec_output_b.as_slice().expect("contiguous"),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.enc_hidden_w.as_slice_mut().expect("contiguous"),
            self.enc_hidden_b.as_slice_mut().expect("contiguous"),
            self.enc_latent_w.as_slice_mut().expect("contiguous"),
            self.enc_latent_b.as_slice_mut().expect("contiguous"),
            self.dec_hidden_w.as_slice_mut().expect("contiguous"),
            self.dec_hidden_b.as_slice_mut().expect("contiguous"),
            self.dec_output_w.as_slice_mut().expect("contiguous"),
            self.dec_output_b.as_slice_mut().expect("contiguous"),
        ]
    }

    /// All parameters in encoder-then-decoder order, each tensor row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Inverse of [`AeParams::to_flat`]; returns `None` on a length mismatch.
    pub fn from_flat(
        param_dim: usize,
        hidden_dim: usize,
        latent_dim: usize,
        flat: &[f64],
    ) -> Option<Self> {
        let mut out = Self::zeros(param_dim, hidden_dim, latent_dim);
        if flat.len() != out.len() {
            return None;
        }
        let mut offset = 0;
        for t in out.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Some(out)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn encode(&self, theta: ArrayView1<f64>) -> Array1<f64> {
        let hidden = (self.enc_hidden_w.dot(&theta) + &self.enc_hidden_b).mapv_into(elu);
        self.enc_latent_w.dot(&hidden) + &self.enc_latent_b
    }

    pub fn decode(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let hidden = (self.dec_hidden_w.dot(&z) + &self.dec_hidden_b).mapv_into(elu);
        self.dec_output_w.dot(&hidden) + &self.dec_output_b
    }

    /// `∂f_D(z)_i / ∂z_j` as a `P × M` matrix: `W_out · diag(elu'(a)) · W_hid`.
    pub fn decoder_jacobian(&self, z: ArrayView1<f64>) -> Matrix {
        let pre = self.dec_hidden_w.dot(&z) + &self.dec_hidden_b;
        let slope = pre.mapv(elu_grad);
        let scaled_hidden = &self.dec_hidden_w * &slope.insert_axis(Axis(1));
        let j = self.dec_output_w.dot(&scaled_hidden);
        let (rows, cols) = j.dim();
        Matrix::from_vec(rows, cols, j.into_iter().collect()).expect("jacobian shape")
    }

    pub(crate) fn forward_batch(&self, x: ArrayView2<f64>) -> Activations {
        let enc_pre = x.dot(&self.enc_hidden_w.t()) + &self.enc_hidden_b;
        let enc_hidden = enc_pre.mapv(elu);
        let latent = enc_hidden.dot(&self.enc_latent_w.t()) + &self.enc_latent_b;
        let dec_pre = latent.dot(&self.dec_hidden_w.t()) + &self.dec_hidden_b;
        let dec_hidden = dec_pre.mapv(elu);
        let output = dec_hidden.dot(&self.dec_output_w.t()) + &self.dec_output_b;
        Activations {
            enc_pre,
            enc_hidden,
            latent,
            dec_pre,
            dec_hidden,
            output,
        }
    }

    /// Per-row squared reconstruction errors `‖θ - f_D(f_E(θ))‖²`.
    pub fn reconstruction_errors(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let act = self.forward_batch(x);
        let diff = act.output - x;
        (&diff * &diff).sum_axis(Axis(1))
    }

    /// Batch-mean loss `(1/B) Σ ‖θ - θ̂‖²` and its gradient with respect to
    /// every parameter.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>) -> (f64, AeParams) {
        let batch = x.nrows() as f64;
        let act = self.forward_batch(x);
        let diff = &act.output - &x;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / batch;

        let d_out = diff * (2.0 / batch);
        let g_dec_output_w = d_out.t().dot(&act.dec_hidden);
        let g_dec_output_b = d_out.sum_axis(Axis(0));

        let mut d_dec_pre = d_out.dot(&self.dec_output_w);
        Zip::from(&mut d_dec_pre)
            .and(&act.dec_pre)
            .for_each(|d, &a| *d *= elu_grad(a));
        let g_dec_hidden_w = d_dec_pre.t().dot(&act.latent);
        let g_dec_hidden_b = d_dec_pre.sum_axis(Axis(0));

        let d_latent = d_dec_pre.dot(&self.dec_hidden_w);
        let g_enc_latent_w = d_latent.t().dot(&act.enc_hidden);
        let g_enc_latent_b = d_latent.sum_axis(Axis(0));

        let mut d_enc_pre = d_latent.dot(&self.enc_latent_w);
        Zip::from(&mut d_enc_pre)
            .and(&act.enc_pre)
            .for_each(|d, &a| *d *= elu_grad(a));
        let g_enc_hidden_w = d_enc_pre.t().dot(&x);
        let g_enc_hidden_b = d_enc_pre.sum_axis(Axis(0));

        let grad = AeParams {
            enc_hidden_w: g_enc_hidden_w,
            enc_hidden_b: g_enc_hidden_b,
            enc_latent_w: g_enc_latent_w,
            enc_latent_b: g_enc_latent_b,
            dec_hidden_w: g_dec_hidden_w,
            dec_hidden_b: g_dec_hidden_b,
            dec_output_w: g_dec_output_w,
            dec_output_b: g_dec_output_b,
        };
        (loss, grad)
    }
}

/// Adam state with moments laid out like [`AeParams::to_flat`].
pub(crate) struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub(crate) fn new(len: usize, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }

    pub(crate) fn update(&mut self, params: &mut AeParams, grad: &AeParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let mut offset = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grad.tensors()) {
            let m = &mut self.first[offset..offset + p.len()];
            let v = &mut self.second[offset..offset + p.len()];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            offset += p.len();
        }
    }
}
