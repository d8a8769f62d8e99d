//! Fully connected networks with ELU hidden activations, reverse-mode
//! gradients written by hand, and the Adam optimizer.
//!
//! Parameters of a network live in one flat buffer, layer after layer, each
//! layer storing its weight matrix (`out × in`, row-major) followed by its
//! bias. Gradients use the same layout, so optimizers and checkpoints can
//! treat a network as a single slice.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, gemm};

/// Exponential linear unit with `alpha = 1`.
#[inline]
pub fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        libm::expm1(v)
    }
}

#[inline]
pub fn elu_derivative(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        libm::exp(v)
    }
}

/// Multilayer perceptron: affine layers, ELU between them, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Intermediate values of a single forward pass, consumed by the backward
/// pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// input of every layer (the network input first)
    inputs: Vec<Vec<f64>>,
    /// pre-activation of every layer; the last one is the network output
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("network has at least one layer")
    }

    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Intermediate values of a batched forward pass; rows are samples.
#[derive(Debug, Clone)]
pub struct BatchTape {
    batch: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl BatchTape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// `batch × output_dim` row-major.
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("network has at least one layer")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("layer sizes", "need at least two positive sizes"));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Mlp::zeros(sizes)?;
        for l in 0..net.layer_count() {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let (w, _) = net.layer_mut(l);
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn from_parts(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Mlp::zeros(sizes)?;
        Error::check_dim(net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.layer_offset(l);
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let (w, rest) = self.params[off..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let off = self.layer_offset(l);
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let (w, rest) = self.params[off..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        Error::check_dim(self.input_dim(), input.len())?;
        let layers = self.layer_count();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = input.to_vec();
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let n_in = self.sizes[l];
            let z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bo)| bo + linalg::dot(&w[o * n_in..(o + 1) * n_in], &a))
                .collect();
            let next = if l + 1 < layers {
                z.iter().map(|v| elu(*v)).collect()
            } else {
                Vec::new()
            };
            inputs.push(core::mem::replace(&mut a, next));
            pre.push(z);
        }
        let out = pre[layers - 1].clone();
        Ok((out, Tape { inputs, pre }))
    }

    pub fn forward_output(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    fn backward_impl(&self, tape: &Tape, out_grad: &[f64], mut param_grads: Option<&mut [f64]>) -> Vec<f64> {
        let mut g = out_grad.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (w, _) = self.layer(l);
            let n_in = self.sizes[l];
            if let Some(grads) = param_grads.as_deref_mut() {
                let off = self.layer_offset(l);
                let n_out = self.sizes[l + 1];
                let (gw, rest) = grads[off..].split_at_mut(n_in * n_out);
                for (o, go) in g.iter().enumerate() {
                    linalg::axpy(*go, &tape.inputs[l], &mut gw[o * n_in..(o + 1) * n_in]);
                    rest[o] += go;
                }
            }
            let mut ga = vec![0.0; n_in];
            for (o, go) in g.iter().enumerate() {
                linalg::axpy(*go, &w[o * n_in..(o + 1) * n_in], &mut ga);
            }
            if l > 0 {
                for (gi, zi) in ga.iter_mut().zip(&tape.pre[l - 1]) {
                    *gi *= elu_derivative(*zi);
                }
            }
            g = ga;
        }
        g
    }

    /// Gradients of `⟨out_grad, output⟩` with respect to the parameters and
    /// the input.
    pub fn backward(&self, tape: &Tape, out_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Error::check_dim(self.output_dim(), out_grad.len())?;
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.backward_impl(tape, out_grad, Some(&mut grads));
        Ok((grads, input_grad))
    }

    /// Vector-Jacobian product with respect to the input only.
    pub fn input_grad(&self, tape: &Tape, out_grad: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.output_dim(), out_grad.len())?;
        Ok(self.backward_impl(tape, out_grad, None))
    }

    /// Forward pass over `batch` row-major samples.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<BatchTape> {
        Error::check_dim(batch * self.input_dim(), input.len())?;
        let layers = self.layer_count();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = input.to_vec();
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let mut z = vec![0.0; batch * n_out];
            for row in z.chunks_exact_mut(n_out) {
                row.copy_from_slice(b);
            }
            gemm(batch, n_in, n_out, 1.0, (&a, n_in, 1), (w, 1, n_in), 1.0, (&mut z, n_out, 1));
            let next = if l + 1 < layers {
                z.iter().map(|v| elu(*v)).collect()
            } else {
                Vec::new()
            };
            inputs.push(core::mem::replace(&mut a, next));
            pre.push(z);
        }
        Ok(BatchTape { batch, inputs, pre })
    }

    /// Accumulate parameter gradients of `Σ_rows ⟨out_grad_row, output_row⟩`
    /// into `grads`; returns the input gradient when asked for.
    pub fn backward_batch(
        &self,
        tape: &BatchTape,
        out_grad: &[f64],
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        let n = tape.batch;
        Error::check_dim(n * self.output_dim(), out_grad.len())?;
        Error::check_dim(self.params.len(), grads.len())?;
        let mut g = out_grad.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (w, _) = self.layer(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let (gw, rest) = grads[off..].split_at_mut(n_in * n_out);
            gemm(n_out, n, n_in, 1.0, (&g, 1, n_out), (&tape.inputs[l], n_in, 1), 1.0, (gw, n_in, 1));
            for row in g.chunks_exact(n_out) {
                linalg::axpy(1.0, row, &mut rest[..n_out]);
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            let mut ga = vec![0.0; n * n_in];
            gemm(n, n_out, n_in, 1.0, (&g, n_out, 1), (w, n_in, 1), 0.0, (&mut ga, n_in, 1));
            if l > 0 {
                for (gi, zi) in ga.iter_mut().zip(&tape.pre[l - 1]) {
                    *gi *= elu_derivative(*zi);
                }
            }
            g = ga;
        }
        Ok(Some(g))
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    /// Default moments `(0.9, 0.999)` and `eps = 1e-8`.
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn reset(&mut self) {
        self.step = 0;
        self.m.iter_mut().for_each(|v| *v = 0.0);
        self.v.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        Error::check_dim(self.m.len(), params.len())?;
        Error::check_dim(self.m.len(), grads.len())?;
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / (libm::sqrt(*v / c2) + self.eps);
        }
        Ok(())
    }
}
