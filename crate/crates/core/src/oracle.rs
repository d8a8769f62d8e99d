//! Linear (probabilistic PCA) VAEs, where everything has a closed form.
//!
//! With decoder `μθ(z) = V z + v` and variance `γ²`, the posterior over `z`
//! is Gaussian with mean `M Vᵀ(x − v)` and covariance `γ² M`, where
//! `M = (VᵀV + γ² I)⁻¹`. The joint energy is then quadratic in `(x, z)` and
//! its minimizer solves one linear system.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::degrade::Degradation;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::nn::Mlp;
use crate::rng;
use crate::vae::VaeModel;

/// Largest data dimension [`analytic_joint_map`] will factor densely.
pub const MAX_DENSE_DIM: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearVae {
    weights: Matrix,
    bias: Vec<f64>,
    gamma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPosterior {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl LinearVae {
    /// `weights` is `d × l`, `bias` has `d` entries.
    pub fn new(weights: Matrix, bias: Vec<f64>, gamma2: f64) -> Result<Self> {
        Error::check_dim(weights.rows(), bias.len())?;
        if !(gamma2 > 0.0) || !gamma2.is_finite() {
            return Err(Error::invalid("gamma2", "must be positive and finite"));
        }
        Ok(LinearVae { weights, bias, gamma2 })
    }

    /// Weights with i.i.d. `N(0, 1/d)` entries, so `VᵀV ≈ I`, and bias
    /// uniform in `[0, 1]`.
    pub fn random<R: Rng + ?Sized>(data_dim: usize, latent_dim: usize, gamma2: f64, rng: &mut R) -> Result<Self> {
        if data_dim == 0 || latent_dim == 0 {
            return Err(Error::invalid("dims", "must be positive"));
        }
        let scale = 1.0 / libm::sqrt(data_dim as f64);
        let w = linalg::scaled(scale, &rng::standard_normal_vec(rng, data_dim * latent_dim));
        let bias = (0..data_dim).map(|_| rng.random::<f64>()).collect();
        LinearVae::new(Matrix::from_row_major(data_dim, latent_dim, w)?, bias, gamma2)
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn data_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.cols()
    }

    /// `M = (VᵀV + γ² I)⁻¹`
    pub fn shrinkage(&self) -> Matrix {
        let mut g = self.weights.gram();
        g.add_diagonal(self.gamma2);
        g.cholesky().expect("VᵀV + γ²I is positive definite").inverse()
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.weights.matvec(z)?;
        linalg::axpy(1.0, &self.bias, &mut x);
        Ok(x)
    }

    // M Vᵀ, l × d
    fn encoder_matrix(&self) -> Result<Matrix> {
        self.shrinkage().matmul(&self.weights.transpose())
    }
}

/// Exact posterior `p(z|x)` of the linear model.
pub fn linear_posterior(lv: &LinearVae, x: &[f64]) -> Result<LinearPosterior> {
    Error::check_dim(lv.data_dim(), x.len())?;
    let m = lv.shrinkage();
    let centered = linalg::sub(x, &lv.bias);
    let mean = m.matvec(&lv.weights.matvec_t(&centered)?)?;
    let mut cov = m;
    cov.as_mut_slice().iter_mut().for_each(|c| *c *= lv.gamma2);
    Ok(LinearPosterior { mean, cov })
}

/// Minimizer of `J1` at `β = 1/γ²` for a linear decoder, from the dense
/// stationarity system
///
/// ```text
/// [ AᵀA/σ² + βI   −βV      ] [x]   [ Aᵀy/σ² + βv ]
/// [ −βVᵀ          βVᵀV + I ] [z] = [ −βVᵀv       ]
/// ```
pub fn analytic_joint_map(lv: &LinearVae, deg: &Degradation) -> Result<(Vec<f64>, Vec<f64>)> {
    let (d, l) = (lv.data_dim(), lv.latent_dim());
    Error::check_dim(d, deg.data_dim())?;
    if d > MAX_DENSE_DIM {
        return Err(Error::invalid("data_dim", "dense joint solve is limited to 200 pixels"));
    }
    let beta = 1.0 / lv.gamma2;
    let inv_s2 = 1.0 / (deg.sigma() * deg.sigma());
    let n = d + l;
    let mut sys = Matrix::zeros(n, n);
    let ata = deg.op().to_dense().gram();
    let vtv = lv.weights.gram();
    for i in 0..d {
        for j in 0..d {
            sys[(i, j)] = ata[(i, j)] * inv_s2;
        }
        sys[(i, i)] += beta;
        for k in 0..l {
            sys[(i, d + k)] = -beta * lv.weights[(i, k)];
            sys[(d + k, i)] = -beta * lv.weights[(i, k)];
        }
    }
    for a in 0..l {
        for b in 0..l {
            sys[(d + a, d + b)] = beta * vtv[(a, b)];
        }
        sys[(d + a, d + a)] += 1.0;
    }
    let mut rhs = vec![0.0; n];
    let aty = deg.back_projection();
    for i in 0..d {
        rhs[i] = aty[i] * inv_s2 + beta * lv.bias[i];
    }
    let vtb = lv.weights.matvec_t(&lv.bias)?;
    for k in 0..l {
        rhs[d + k] = -beta * vtb[k];
    }
    let sol = sys.cholesky()?.solve(&rhs)?;
    Ok((sol[..d].to_vec(), sol[d..].to_vec()))
}

/// The linear model as a [`VaeModel`]: a one-layer decoder `V z + v` and a
/// one-layer encoder whose mean is the exact posterior mean and whose
/// log-variances are the constants `log(γ² M_ii)`.
pub fn build_exact_vae(lv: &LinearVae) -> Result<VaeModel> {
    let (d, l) = (lv.data_dim(), lv.latent_dim());
    let mut decoder = Mlp::zeros(&[l, d])?;
    {
        let (w, b) = decoder.layer_mut(0);
        w.copy_from_slice(lv.weights.as_slice());
        b.copy_from_slice(&lv.bias);
    }
    let m = lv.shrinkage();
    let enc = lv.encoder_matrix()?;
    let enc_bias = enc.matvec(&lv.bias)?;
    let mut encoder = Mlp::zeros(&[d, 2 * l])?;
    {
        let (w, b) = encoder.layer_mut(0);
        w[..l * d].copy_from_slice(enc.as_slice());
        for k in 0..l {
            b[k] = -enc_bias[k];
            b[l + k] = libm::log(lv.gamma2 * m[(k, k)]);
        }
    }
    VaeModel::from_parts(encoder, decoder, lv.gamma2, 0.0)
}
