//! Forward models `y = A x + η`, `η ~ N(0, σ² I)`, and the data-fit term
//! `F(x) = ‖A x − y‖² / (2σ²)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::linops::{Kernel, LinOp};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Degradation {
    op: LinOp,
    sigma: f64,
    y: Vec<f64>,
}

impl Degradation {
    /// Observation starts at zero; set it with [`Degradation::degrade`] or
    /// [`Degradation::with_observation`].
    pub fn new(op: LinOp, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("sigma", "noise level must be positive"));
        }
        let y = vec![0.0; op.out_dim()];
        Ok(Degradation { op, sigma, y })
    }

    pub fn with_observation(mut self, y: Vec<f64>) -> Result<Self> {
        Error::check_dim(self.op.out_dim(), y.len())?;
        self.y = y;
        Ok(self)
    }

    pub fn op(&self) -> &LinOp {
        &self.op
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn observation(&self) -> &[f64] {
        &self.y
    }

    pub fn data_dim(&self) -> usize {
        self.op.in_dim()
    }

    /// Simulate `y = A x + σ ε` and store it.
    pub fn degrade<R: Rng + ?Sized>(&mut self, x: &[f64], rng: &mut R) -> Result<&[f64]> {
        let mut y = self.op.apply(x)?;
        let eps = rng::standard_normal_vec(rng, y.len());
        linalg::axpy(self.sigma, &eps, &mut y);
        self.y = y;
        Ok(&self.y)
    }

    /// `A x − y`
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.op.apply(x)?;
        linalg::axpy(-1.0, &self.y, &mut r);
        Ok(r)
    }

    pub fn data_term(&self, x: &[f64]) -> Result<f64> {
        Ok(linalg::norm_sq(&self.residual(x)?) / (2.0 * self.sigma * self.sigma))
    }

    /// `Aᵀ(A x − y) / σ²`
    pub fn data_term_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.op.adjoint_apply(&self.residual(x)?)?;
        Ok(linalg::scaled(1.0 / (self.sigma * self.sigma), &g))
    }

    /// `Aᵀ y`, the initial guess used by the solvers.
    pub fn back_projection(&self) -> Vec<f64> {
        self.op.adjoint_apply(&self.y).expect("observation has out_dim entries")
    }
}

/// `A = I`.
pub fn denoising(d: usize, sigma: f64) -> Result<Degradation> {
    Degradation::new(LinOp::Identity { dim: d }, sigma)
}

/// `q × d` sensing matrix with i.i.d. `N(0, 1/q)` entries.
pub fn compressed_sensing<R: Rng + ?Sized>(q: usize, d: usize, sigma: f64, rng: &mut R) -> Result<Degradation> {
    if q == 0 || d == 0 {
        return Err(Error::invalid("q", "need at least one measurement"));
    }
    let scale = 1.0 / libm::sqrt(q as f64);
    let entries = linalg::scaled(scale, &rng::standard_normal_vec(rng, q * d));
    Degradation::new(LinOp::Dense(Matrix::from_row_major(q, d, entries)?), sigma)
}

/// Drop a fraction `p` of the pixels: exactly `round((1 − p)·d)` pixels are
/// kept, chosen uniformly without replacement.
pub fn interpolation<R: Rng + ?Sized>(p: f64, d: usize, sigma: f64, rng: &mut R) -> Result<Degradation> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid("p", "missing fraction must lie in [0, 1)"));
    }
    let kept = libm::round((1.0 - p) * d as f64) as usize;
    if kept == 0 {
        return Err(Error::invalid("p", "no pixel would be observed"));
    }
    let mut keep = vec![false; d];
    for i in rand::seq::index::sample(rng, d, kept) {
        keep[i] = true;
    }
    Degradation::new(LinOp::Mask { keep }, sigma)
}

/// Same-size convolution with `kernel` and zero padding.
pub fn deblur(kernel: Kernel, width: usize, height: usize, sigma: f64) -> Result<Degradation> {
    Degradation::new(LinOp::convolution(width, height, kernel)?, sigma)
}

/// Block-average decimation by `factor`.
pub fn superres(factor: usize, width: usize, height: usize, sigma: f64) -> Result<Degradation> {
    Degradation::new(LinOp::decimation(width, height, factor)?, sigma)
}
