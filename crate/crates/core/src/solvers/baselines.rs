use alloc::vec::Vec;

use rand::Rng;

use super::{Solution, SolverTrace, Step, TraceRecord};
use crate::degrade::Degradation;
use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::AdamState;
use crate::rng;
use crate::timer::Stopwatch;
use crate::vae::VaeModel;

const POWER_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentConfig {
    pub iters: usize,
    pub lr: f64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig { iters: 1000, lr: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub iters: usize,
    /// step on the data term, `1/λmax(AᵀA)` when `None`
    pub eta: Option<f64>,
    pub projection: LatentConfig,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig {
            iters: 100,
            eta: None,
            projection: LatentConfig { iters: 200, lr: 0.01 },
        }
    }
}

/// `F(μθ(z), y) + ½‖z‖²`, the negative log-posterior of the latent code.
pub fn mapz_objective(model: &VaeModel, deg: &Degradation, z: &[f64]) -> Result<f64> {
    Ok(deg.data_term(&model.decode(z)?)? + 0.5 * linalg::norm_sq(z))
}

// value and z-gradient of `F(μθ(z)) + prior_weight·½‖z‖²`
fn data_value_grad(model: &VaeModel, deg: &Degradation, z: &[f64], prior_weight: f64) -> Result<(f64, Vec<f64>)> {
    let (mu, tape) = model.decode_with_tape(z)?;
    let value = deg.data_term(&mu)? + prior_weight * 0.5 * linalg::norm_sq(z);
    let mut g = model.decoder_vjp(&tape, &deg.data_term_grad(&mu)?)?;
    linalg::axpy(prior_weight, z, &mut g);
    Ok((value, g))
}

// value and z-gradient of `½‖w − μθ(z)‖²`
fn projection_value_grad(model: &VaeModel, w: &[f64], z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (mu, tape) = model.decode_with_tape(z)?;
    let resid = linalg::sub(&mu, w);
    Ok((0.5 * linalg::norm_sq(&resid), model.decoder_vjp(&tape, &resid)?))
}

fn project_to_sphere(z: &mut [f64], radius: f64) -> Result<()> {
    let n = linalg::norm(z);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::invalid("z0", "cannot project a zero latent onto the sphere"));
    }
    let s = radius / n;
    z.iter_mut().for_each(|v| *v *= s);
    Ok(())
}

struct Descent {
    z: Vec<f64>,
    value: f64,
}

// Adam with best-iterate selection. `radius` puts every iterate back on the
// sphere of that radius; `record` sees each iterate with its value.
fn descend<E, R>(z0: &[f64], cfg: &LatentConfig, radius: Option<f64>, mut eval: E, mut record: R) -> Result<Descent>
where
    E: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    R: FnMut(&[f64], f64),
{
    if !(cfg.lr > 0.0) {
        return Err(Error::invalid("lr", "must be positive"));
    }
    let mut z = z0.to_vec();
    if let Some(r) = radius {
        project_to_sphere(&mut z, r)?;
    }
    let (v0, mut grad) = eval(&z)?;
    record(&z, v0);
    let mut best = Descent { z: z.clone(), value: v0 };
    let mut adam = AdamState::new(z.len(), cfg.lr);
    for _ in 0..cfg.iters {
        adam.step(&mut z, &grad)?;
        if let Some(r) = radius {
            project_to_sphere(&mut z, r)?;
        }
        let (v, g) = eval(&z)?;
        record(&z, v);
        grad = g;
        if v < best.value {
            best.value = v;
            best.z.copy_from_slice(&z);
        }
    }
    Ok(best)
}

fn baseline_record(clock: &Stopwatch, objective: f64, residual: f64, z: &[f64]) -> TraceRecord {
    TraceRecord {
        objective,
        step: Step::Baseline,
        beta: None,
        residual,
        grad_tol_met: false,
        latent_norm: linalg::norm(z),
        elapsed: clock.elapsed(),
    }
}

fn finish(model: &VaeModel, z: Vec<f64>, records: Vec<TraceRecord>, iterations: usize, clock: &Stopwatch) -> Result<Solution> {
    Ok(Solution {
        x: model.decode(&z)?,
        z,
        trace: SolverTrace {
            records,
            iterations,
            converged: true,
            elapsed: clock.elapsed(),
        },
    })
}

/// CSGM: Adam on `F(μθ(z)) + ½‖z‖²` from `z0`, returning the best iterate.
pub fn csgm(model: &VaeModel, deg: &Degradation, z0: &[f64], cfg: &LatentConfig) -> Result<Solution> {
    Error::check_dim(model.latent_dim(), z0.len())?;
    Error::check_dim(model.data_dim(), deg.data_dim())?;
    let clock = Stopwatch::start();
    let mut records = Vec::with_capacity(cfg.iters + 1);
    let best = descend(
        z0,
        cfg,
        None,
        |z| data_value_grad(model, deg, z, 1.0),
        |z, v| records.push(baseline_record(&clock, v, 0.0, z)),
    )?;
    finish(model, best.z, records, cfg.iters, &clock)
}

/// CSGM from `restarts` standard normal starting codes; the run with the
/// lowest objective wins and its trace is returned.
pub fn mcsgm<R: Rng + ?Sized>(
    model: &VaeModel,
    deg: &Degradation,
    restarts: usize,
    cfg: &LatentConfig,
    rng: &mut R,
) -> Result<Solution> {
    if restarts == 0 {
        return Err(Error::invalid("restarts", "need at least one"));
    }
    let mut best: Option<(f64, Solution)> = None;
    for _ in 0..restarts {
        let z0 = rng::standard_normal_vec(rng, model.latent_dim());
        let sol = csgm(model, deg, &z0, cfg)?;
        let obj = mapz_objective(model, deg, &sol.z)?;
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, sol));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// PULSE: Adam on `F(μθ(z))` with `z` renormalized to `‖z‖ = √l` after
/// every update.
pub fn pulse(model: &VaeModel, deg: &Degradation, z0: &[f64], cfg: &LatentConfig) -> Result<Solution> {
    Error::check_dim(model.latent_dim(), z0.len())?;
    Error::check_dim(model.data_dim(), deg.data_dim())?;
    let clock = Stopwatch::start();
    let radius = libm::sqrt(model.latent_dim() as f64);
    let mut records = Vec::with_capacity(cfg.iters + 1);
    let best = descend(
        z0,
        cfg,
        Some(radius),
        |z| data_value_grad(model, deg, z, 0.0),
        |z, v| records.push(baseline_record(&clock, v, 0.0, z)),
    )?;
    finish(model, best.z, records, cfg.iters, &clock)
}

/// Projected gradient descent on `F` with projection onto the decoder
/// range: `w = x − η Aᵀ(Ax − y)`, `x ← μθ(argmin_z ‖w − μθ(z)‖²)`.
///
/// Each projection warm-starts from the previous code; the first one
/// starts from the encoder mean of `w`.
pub fn pgd_gan(model: &VaeModel, deg: &Degradation, x0: &[f64], cfg: &PgdConfig) -> Result<Solution> {
    Error::check_dim(model.data_dim(), x0.len())?;
    Error::check_dim(model.data_dim(), deg.data_dim())?;
    let eta = match cfg.eta {
        Some(e) if e >= 0.0 => e,
        Some(_) => return Err(Error::invalid("eta", "must be non-negative")),
        None => 1.0 / deg.op().normal_max_eigenvalue(POWER_ITERS),
    };
    let sigma2 = deg.sigma() * deg.sigma();
    let clock = Stopwatch::start();
    let mut records = Vec::with_capacity(cfg.iters + 1);
    let mut x = x0.to_vec();
    let mut z: Option<Vec<f64>> = None;
    records.push(baseline_record(&clock, deg.data_term(&x)?, 0.0, &[]));
    for _ in 0..cfg.iters {
        // data_term_grad carries 1/σ²; η acts on the unscaled gradient
        let g = deg.data_term_grad(&x)?;
        let mut w = x.clone();
        linalg::axpy(-eta * sigma2, &g, &mut w);
        let start = match z.take() {
            Some(z) => z,
            None => model.encoder_mean(&w)?,
        };
        let proj = descend(&start, &cfg.projection, None, |z| projection_value_grad(model, &w, z), |_, _| {})?;
        x = model.decode(&proj.z)?;
        records.push(baseline_record(&clock, deg.data_term(&x)?, 2.0 * proj.value, &proj.z));
        z = Some(proj.z);
    }
    let z = match z {
        Some(z) => z,
        None => model.encoder_mean(&x)?,
    };
    Ok(Solution {
        x,
        z,
        trace: SolverTrace {
            records,
            iterations: cfg.iters,
            converged: true,
            elapsed: clock.elapsed(),
        },
    })
}

/// Latent projection used by PGD-GAN, exposed for checking against a
/// closed form on linear decoders.
pub fn project_to_range(model: &VaeModel, w: &[f64], z0: &[f64], cfg: &LatentConfig) -> Result<Vec<f64>> {
    Error::check_dim(model.data_dim(), w.len())?;
    Ok(descend(z0, cfg, None, |z| projection_value_grad(model, w, z), |_, _| {})?.z)
}
