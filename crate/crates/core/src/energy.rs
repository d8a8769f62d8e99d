//! The joint energy and its partial minimizers.
//!
//! With a Gaussian decoder `p(x|z) = N(μθ(z), β⁻¹ I)` and a standard normal
//! latent prior, the negative joint log-posterior is
//!
//! ```text
//! J1(x, z) = F(x) + H(x, z) + ½‖z‖²
//! H(x, z)  = ½ [ d log(2π) + d log(1/β) + β ‖x − μθ(z)‖² ]
//! ```
//!
//! `J1` is strictly convex in `x`, which gives the closed-form x-step. In
//! `z` it is not; [`EnergyCtx::gd_refine_z`] runs Adam and keeps the best
//! iterate seen, so its output never has higher energy than its start.
//! The encoder gives the quadratic surrogate `J2 = F + K` whose z-minimizer
//! is the encoder mean.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::degrade::Degradation;
use crate::error::{Error, Result};
use crate::linalg;
use crate::linops;
use crate::nn::AdamState;
use crate::vae::VaeModel;

const X_STEP_CG_TOL: f64 = 1e-12;
const X_STEP_CG_MAXITER: usize = 5000;

/// Coupling weight `β = 1/γ²` of the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    /// `1/γ²` of the trained model
    Native,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub lr: f64,
    pub max_iters: usize,
    /// stop once `‖∇_z J1‖∞` falls to this level
    pub grad_tol: f64,
    /// stop after this many iterations without a significant improvement
    pub patience: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            lr: 0.01,
            max_iters: 500,
            grad_tol: 1e-5,
            patience: 50,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.grad_tol > 0.0) || self.patience == 0 {
            return Err(Error::invalid("gd", "lr, grad_tol and patience must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub z: Vec<f64>,
    /// `J1(x, z)` at the returned point
    pub energy: f64,
    /// `‖∇_z J1‖∞` at the returned point
    pub grad_norm: f64,
    pub iterations: usize,
    pub grad_tol_met: bool,
}

/// A latent code together with its decoded mean, its x-step image and the
/// energy of that pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub decoded: Vec<f64>,
    pub energy: f64,
}

impl Candidate {
    /// `‖μθ(z) − x‖²`
    pub fn gap_sq(&self) -> f64 {
        linalg::dist_sq(&self.decoded, &self.x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnergyCtx<'a> {
    model: &'a VaeModel,
    deg: &'a Degradation,
    beta: f64,
}

impl<'a> EnergyCtx<'a> {
    pub fn new(model: &'a VaeModel, deg: &'a Degradation, beta: Beta) -> Result<Self> {
        Error::check_dim(model.data_dim(), deg.data_dim())?;
        let beta = match beta {
            Beta::Native => 1.0 / model.gamma2(),
            Beta::Fixed(b) => b,
        };
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid("beta", "must be positive and finite"));
        }
        Ok(EnergyCtx { model, deg, beta })
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        EnergyCtx::new(self.model, self.deg, Beta::Fixed(beta))
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn model(&self) -> &'a VaeModel {
        self.model
    }

    pub fn degradation(&self) -> &'a Degradation {
        self.deg
    }

    /// `½ d log(2π/β)`, the infimum of `J1`.
    pub fn lower_bound(&self) -> f64 {
        0.5 * self.model.data_dim() as f64 * libm::log(2.0 * PI / self.beta)
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        Error::check_dim(self.model.data_dim(), x.len())
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        Error::check_dim(self.model.latent_dim(), z.len())
    }

    fn coupling_from_gap(&self, gap_sq: f64) -> f64 {
        let d = self.model.data_dim() as f64;
        0.5 * (d * libm::log(2.0 * PI) + d * libm::log(1.0 / self.beta) + self.beta * gap_sq)
    }

    /// `H(x, z) = −log p(x|z)` with covariance `β⁻¹ I`.
    pub fn coupling_h(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let mu = self.model.decode(z)?;
        Ok(self.coupling_from_gap(linalg::dist_sq(x, &mu)))
    }

    /// `J1` given the already decoded mean `μθ(z)`.
    pub fn j1_with_decoded(&self, x: &[f64], z: &[f64], decoded: &[f64]) -> Result<f64> {
        Ok(self.deg.data_term(x)? + self.coupling_from_gap(linalg::dist_sq(x, decoded)) + 0.5 * linalg::norm_sq(z))
    }

    pub fn j1(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        self.check_z(z)?;
        let mu = self.model.decode(z)?;
        self.j1_with_decoded(x, z, &mu)
    }

    /// `∇_z J1 = β Jμᵀ (μθ(z) − x) + z`
    pub fn j1_grad_z(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        Ok(self.z_value_and_grad(x, z, 0.0)?.1)
    }

    /// `∇_x J1 = Aᵀ(Ax − y)/σ² + β (x − μθ(z))`
    pub fn j1_grad_x(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let mu = self.model.decode(z)?;
        let mut g = self.deg.data_term_grad(x)?;
        for ((gi, xi), mi) in g.iter_mut().zip(x).zip(&mu) {
            *gi += self.beta * (xi - mi);
        }
        Ok(g)
    }

    // J1(x, ·) and its gradient at z; `data_term` is F(x), constant in z
    fn z_value_and_grad(&self, x: &[f64], z: &[f64], data_term: f64) -> Result<(f64, Vec<f64>)> {
        self.check_z(z)?;
        let (mu, tape) = self.model.decode_with_tape(z)?;
        let resid: Vec<f64> = mu.iter().zip(x).map(|(m, xi)| self.beta * (m - xi)).collect();
        let gap_sq = linalg::dist_sq(&mu, x);
        let mut g = self.model.decoder_vjp(&tape, &resid)?;
        linalg::axpy(1.0, z, &mut g);
        Ok((data_term + self.coupling_from_gap(gap_sq) + 0.5 * linalg::norm_sq(z), g))
    }

    /// `argmin_x J1(x, z)` for the decoded mean `μθ(z)`:
    /// `(AᵀA + σ²β I)⁻¹ (Aᵀy + σ²β μθ(z))`.
    pub fn x_step_for_decoded(&self, decoded: &[f64]) -> Result<Vec<f64>> {
        self.check_x(decoded)?;
        let op = self.deg.op();
        let c = self.deg.sigma() * self.deg.sigma() * self.beta;
        let mut rhs = self.deg.back_projection();
        if let Some(diag) = op.normal_diagonal() {
            let x = rhs
                .iter()
                .zip(&diag)
                .zip(decoded)
                .map(|((b, a), m)| if *a == 0.0 { *m } else { (b + c * m) / (a + c) })
                .collect();
            return Ok(x);
        }
        linalg::axpy(c, decoded, &mut rhs);
        linops::cg_solve(
            |u| {
                let mut v = op.normal_apply(u).expect("x-sized vector");
                linalg::axpy(c, u, &mut v);
                v
            },
            &rhs,
            X_STEP_CG_TOL,
            X_STEP_CG_MAXITER,
        )
    }

    pub fn x_step(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_z(z)?;
        self.x_step_for_decoded(&self.model.decode(z)?)
    }

    /// Decode `z`, take the x-step and evaluate the pair.
    pub fn candidate(&self, z: Vec<f64>) -> Result<Candidate> {
        self.check_z(&z)?;
        let decoded = self.model.decode(&z)?;
        let x = self.x_step_for_decoded(&decoded)?;
        let energy = self.j1_with_decoded(&x, &z, &decoded)?;
        Ok(Candidate { x, z, decoded, energy })
    }

    /// `argmin_z J2(x, z) = μφ(x)`
    pub fn z_step_approx(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.encoder_mean(x)
    }

    /// `K(x, z) = −log q_φ(z|x)`
    pub fn coupling_k(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.check_z(z)?;
        let q = self.model.encode(x)?;
        let l = z.len() as f64;
        let quad: f64 = z.iter().zip(&q.mean).zip(&q.var).map(|((zi, m), v)| (zi - m) * (zi - m) / v).sum();
        let logdet: f64 = q.var.iter().map(|v| libm::log(*v)).sum();
        Ok(0.5 * (l * libm::log(2.0 * PI) + logdet + quad))
    }

    /// `J2(x, z)` without the `−log p_X(x)` term, which is constant in `z`.
    pub fn j2(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        Ok(self.deg.data_term(x)? + self.coupling_k(x, z)?)
    }

    /// Adam on `z ↦ J1(x, z)` from `z0`, returning the best iterate seen.
    pub fn gd_refine_z(&self, x: &[f64], z0: &[f64], cfg: &GdConfig) -> Result<GdOutcome> {
        cfg.validate()?;
        self.check_x(x)?;
        let data_term = self.deg.data_term(x)?;
        let mut z = z0.to_vec();
        let (e0, g0) = self.z_value_and_grad(x, &z, data_term)?;
        let mut best = GdOutcome {
            z: z.clone(),
            energy: e0,
            grad_norm: linalg::max_abs(&g0),
            iterations: 0,
            grad_tol_met: false,
        };
        let mut anchor = e0;
        let mut stale = 0usize;
        let mut adam = AdamState::new(z.len(), cfg.lr);
        let mut grad = g0;
        let mut grad_norm = best.grad_norm;
        let mut iterations = 0;
        while iterations < cfg.max_iters && grad_norm > cfg.grad_tol {
            adam.step(&mut z, &grad)?;
            iterations += 1;
            let (e, g) = self.z_value_and_grad(x, &z, data_term)?;
            grad_norm = linalg::max_abs(&g);
            grad = g;
            if e < best.energy {
                best.z.copy_from_slice(&z);
                best.energy = e;
                best.grad_norm = grad_norm;
            }
            if e < anchor - 1e-10 * anchor.abs().max(1.0) {
                anchor = e;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        best.iterations = iterations;
        best.grad_tol_met = best.grad_norm <= cfg.grad_tol;
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade;
    use crate::rng::{seeded, standard_normal_vec};
    use alloc::vec;

    fn setup() -> (VaeModel, Degradation) {
        let model = VaeModel::new(9, 2, &[6], 0.0, &mut seeded(11)).unwrap();
        let mut deg = degrade::interpolation(0.4, 9, 0.2, &mut seeded(12)).unwrap();
        deg.degrade(&[0.5; 9], &mut seeded(13)).unwrap();
        (model, deg)
    }

    #[test]
    fn coupling_at_decoded_mean_is_constant() {
        let (model, deg) = setup();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Fixed(4.0)).unwrap();
        let z = [0.2, -0.4];
        let mu = model.decode(&z).unwrap();
        let h = ctx.coupling_h(&mu, &z).unwrap();
        assert!((h - 4.5 * libm::log(2.0 * PI / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn coupling_is_linear_in_squared_gap() {
        let (model, deg) = setup();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Fixed(3.0)).unwrap();
        let z = [0.1, 0.3];
        let mu = model.decode(&z).unwrap();
        let mut x1 = mu.clone();
        x1[0] += 0.5;
        let mut x2 = mu.clone();
        x2[0] += 0.5 * libm::sqrt(2.0);
        let h0 = ctx.coupling_h(&mu, &z).unwrap();
        let h1 = ctx.coupling_h(&x1, &z).unwrap();
        let h2 = ctx.coupling_h(&x2, &z).unwrap();
        assert!(((h1 - h0) - 1.5 * 0.25).abs() < 1e-12);
        assert!(((h2 - h0) - 2.0 * (h1 - h0)).abs() < 1e-12);
    }

    #[test]
    fn grad_z_at_decoded_point_is_z() {
        let (model, deg) = setup();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
        let z = [0.7, -1.2];
        let mu = model.decode(&z).unwrap();
        let g = ctx.j1_grad_z(&mu, &z).unwrap();
        assert!((g[0] - 0.7).abs() < 1e-12 && (g[1] + 1.2).abs() < 1e-12);
        let mu0 = model.decode(&[0.0, 0.0]).unwrap();
        assert!(linalg::max_abs(&ctx.j1_grad_z(&mu0, &[0.0, 0.0]).unwrap()) < 1e-12);
    }

    #[test]
    fn j1_minimum_value() {
        let (model, _) = setup();
        let mu = model.decode(&[0.0, 0.0]).unwrap();
        let deg = degrade::denoising(9, 0.3).unwrap().with_observation(mu.clone()).unwrap();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Fixed(2.0)).unwrap();
        assert!((ctx.j1(&mu, &[0.0, 0.0]).unwrap() - ctx.lower_bound()).abs() < 1e-12);
    }

    #[test]
    fn x_step_denoising_closed_form() {
        let (model, _) = setup();
        let y: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
        let sigma = 0.3;
        let deg = degrade::denoising(9, sigma).unwrap().with_observation(y.clone()).unwrap();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Fixed(5.0)).unwrap();
        let z = [0.4, 0.1];
        let mu = model.decode(&z).unwrap();
        let x = ctx.x_step(&z).unwrap();
        let s2 = sigma * sigma;
        for i in 0..9 {
            let expect = (y[i] / s2 + 5.0 * mu[i]) / (1.0 / s2 + 5.0);
            assert!((x[i] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn x_step_mask_keeps_decoded_on_dropped_pixels() {
        let (model, deg) = setup();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
        let z = [0.3, 0.3];
        let mu = model.decode(&z).unwrap();
        let x = ctx.x_step(&z).unwrap();
        let LinOp::Mask { keep } = deg.op() else { unreachable!() };
        for i in 0..9 {
            if !keep[i] {
                assert_eq!(x[i], mu[i]);
            }
        }
    }

    use crate::linops::LinOp;

    #[test]
    fn j2_min_is_encoder_mean() {
        let (model, deg) = setup();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
        let x = [0.2; 9];
        let z1 = ctx.z_step_approx(&x).unwrap();
        assert_eq!(z1, ctx.z_step_approx(&x).unwrap());
        let base = ctx.j2(&x, &z1).unwrap();
        let q = model.encode(&x).unwrap();
        let logdet: f64 = q.var.iter().map(|v| libm::log(*v)).sum();
        assert!((ctx.coupling_k(&x, &z1).unwrap() - 0.5 * (2.0 * libm::log(2.0 * PI) + logdet)).abs() < 1e-12);
        let mut rng = seeded(4);
        for _ in 0..20 {
            let dz = standard_normal_vec(&mut rng, 2);
            let z = [z1[0] + 0.1 * dz[0], z1[1] + 0.1 * dz[1]];
            assert!(ctx.j2(&x, &z).unwrap() > base);
        }
    }

    #[test]
    fn gd_never_increases_energy() {
        let (model, deg) = setup();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
        let mut rng = seeded(9);
        for _ in 0..100 {
            let x = standard_normal_vec(&mut rng, 9);
            let z0 = standard_normal_vec(&mut rng, 2);
            let cfg = GdConfig {
                max_iters: 20,
                ..GdConfig::default()
            };
            let out = ctx.gd_refine_z(&x, &z0, &cfg).unwrap();
            assert!(out.energy <= ctx.j1(&x, &z0).unwrap());
            assert!((out.energy - ctx.j1(&x, &out.z).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn gd_keeps_stationary_start() {
        let (model, deg) = setup();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
        let mu = model.decode(&[0.0, 0.0]).unwrap();
        let out = ctx.gd_refine_z(&mu, &[0.0, 0.0], &GdConfig::default()).unwrap();
        assert_eq!(out.z, vec![0.0, 0.0]);
        assert_eq!(out.iterations, 0);
        assert!(out.grad_tol_met);
    }

    #[test]
    fn bad_beta_rejected() {
        let (model, deg) = setup();
        assert!(EnergyCtx::new(&model, &deg, Beta::Fixed(0.0)).is_err());
        let other = degrade::denoising(4, 0.1).unwrap();
        assert!(EnergyCtx::new(&model, &other, Beta::Native).is_err());
    }
}
