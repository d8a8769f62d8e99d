use alloc::vec;
use alloc::vec::Vec;

use super::{Solution, SolverTrace, Step, TraceRecord};
use crate::degrade::Degradation;
use crate::energy::{Beta, Candidate, EnergyCtx, GdConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::timer::Stopwatch;
use crate::vae::VaeModel;

const FIXED_POINT_TOL: f64 = 1e-13;
const STOP_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JpmapConfig {
    /// branch 1 is tried while `n < n1`
    pub n1: usize,
    /// branch 2 is tried while `n < n2`
    pub n2: usize,
    pub n_max: usize,
    pub gd: GdConfig,
    /// stop when `J1` drops by less than this relative amount over five
    /// iterations
    pub energy_rel_tol: f64,
}

impl Default for JpmapConfig {
    fn default() -> Self {
        JpmapConfig {
            n1: 25,
            n2: 150,
            n_max: 300,
            gd: GdConfig::default(),
            energy_rel_tol: 1e-6,
        }
    }
}

impl JpmapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 > self.n2 || self.n2 > self.n_max {
            return Err(Error::invalid("n1/n2", "need 0 <= n1 <= n2 <= n_max"));
        }
        if !(self.energy_rel_tol >= 0.0) {
            return Err(Error::invalid("energy_rel_tol", "must be non-negative"));
        }
        self.gd.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationConfig {
    /// bound on `‖μθ(z) − x‖²`
    pub epsilon: f64,
    /// multiplier rate applied to the relative violation `C/ε`
    pub rho: f64,
    /// starting weight, `1/γ²` when `None`
    pub beta0: Option<f64>,
    /// total number of inner solves, the first one included
    pub max_outer: usize,
}

impl ContinuationConfig {
    /// `ε = (gray/255)²·d`
    pub fn for_gray_levels(gray: f64, data_dim: usize) -> Self {
        let e = gray / 255.0;
        ContinuationConfig {
            epsilon: e * e * data_dim as f64,
            rho: 0.5,
            beta0: None,
            max_outer: 50,
        }
    }

    /// Three gray levels of RMS distance to the decoder range.
    pub fn default_for(data_dim: usize) -> Self {
        ContinuationConfig::for_gray_levels(3.0, data_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.rho > 0.0) || self.max_outer == 0 {
            return Err(Error::invalid("continuation", "epsilon, rho and max_outer must be positive"));
        }
        if let Some(b) = self.beta0 {
            if !(b > 0.0) {
                return Err(Error::invalid("beta0", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplittingConfig {
    /// multiples of `1/γ²`
    pub schedule: Vec<f64>,
    pub inner_iters: usize,
    pub gd: GdConfig,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        SplittingConfig {
            schedule: vec![1.0, 10.0, 100.0, 1e3, 1e4],
            inner_iters: 60,
            gd: GdConfig::default(),
        }
    }
}

struct Recorder<'c> {
    clock: &'c Stopwatch,
    epsilon: f64,
    records: Vec<TraceRecord>,
}

impl Recorder<'_> {
    fn push(&mut self, ctx: &EnergyCtx, c: &Candidate, step: Step, grad_tol_met: bool) {
        self.records.push(TraceRecord {
            objective: c.energy,
            step,
            beta: Some(ctx.beta()),
            residual: c.gap_sq() - self.epsilon,
            grad_tol_met,
            latent_norm: linalg::norm(&c.z),
            elapsed: self.clock.elapsed(),
        });
    }
}

fn start_point(ctx: &EnergyCtx, x: Vec<f64>, z: Vec<f64>) -> Result<Candidate> {
    let decoded = ctx.model().decode(&z)?;
    let energy = ctx.j1_with_decoded(&x, &z, &decoded)?;
    Ok(Candidate { x, z, decoded, energy })
}

// branch 3: descend in z from the current latent, then take the x-step.
// A CG x-step is inexact, so the old x is kept if it is not beaten.
fn warm_candidate(ctx: &EnergyCtx, cur: &Candidate, gd: &GdConfig) -> Result<(Candidate, bool)> {
    let out = ctx.gd_refine_z(&cur.x, &cur.z, gd)?;
    let c = ctx.candidate(out.z)?;
    if c.energy <= out.energy {
        return Ok((c, out.grad_tol_met));
    }
    let kept = Candidate {
        x: cur.x.clone(),
        energy: out.energy,
        z: c.z,
        decoded: c.decoded,
    };
    Ok((kept, out.grad_tol_met))
}

fn stalled(history: &[f64], tol: f64) -> bool {
    let n = history.len();
    if n <= STOP_WINDOW {
        return false;
    }
    let now = history[n - 1];
    history[n - 1 - STOP_WINDOW] - now < tol * now.abs().max(1.0)
}

/// Exact alternation: `z ← μφ(x)`, `x ← x_step(z)` until a fixed point.
pub fn jpmap_exact(ctx: &EnergyCtx, x0: &[f64], maxiter: usize) -> Result<Solution> {
    let clock = Stopwatch::start();
    let mut rec = Recorder { clock: &clock, epsilon: 0.0, records: Vec::new() };
    let z0 = ctx.z_step_approx(x0)?;
    let mut cur = start_point(ctx, x0.to_vec(), z0)?;
    rec.push(ctx, &cur, Step::Initial, false);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < maxiter {
        let z = ctx.z_step_approx(&cur.x)?;
        let next = ctx.candidate(z)?;
        iterations += 1;
        let dx = libm::sqrt(linalg::dist_sq(&next.x, &cur.x)) / (1.0 + linalg::norm(&cur.x));
        let dz = libm::sqrt(linalg::dist_sq(&next.z, &cur.z)) / (1.0 + linalg::norm(&cur.z));
        rec.push(ctx, &next, Step::Encoder, false);
        cur = next;
        if dx.max(dz) <= FIXED_POINT_TOL {
            converged = true;
            break;
        }
    }
    Ok(Solution {
        x: cur.x,
        z: cur.z,
        trace: SolverTrace {
            records: rec.records,
            iterations,
            converged,
            elapsed: clock.elapsed(),
        },
    })
}

/// Three-candidate search: every iteration evaluates all three candidates and keeps
/// the one with the lowest `J1`.
pub fn jpmap_approx(ctx: &EnergyCtx, x0: &[f64], z0: &[f64], cfg: &JpmapConfig) -> Result<Solution> {
    cfg.validate()?;
    let clock = Stopwatch::start();
    let mut rec = Recorder { clock: &clock, epsilon: 0.0, records: Vec::new() };
    let mut cur = start_point(ctx, x0.to_vec(), z0.to_vec())?;
    rec.push(ctx, &cur, Step::Initial, false);
    let mut history = vec![cur.energy];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.n_max {
        let z1 = ctx.z_step_approx(&cur.x)?;
        let g2 = ctx.gd_refine_z(&cur.x, &z1, &cfg.gd)?;
        let c1 = ctx.candidate(z1)?;
        let c2 = ctx.candidate(g2.z)?;
        let (c3, tol3) = warm_candidate(ctx, &cur, &cfg.gd)?;
        let mut best = (c3, Step::WarmGd, tol3);
        if c2.energy < best.0.energy {
            best = (c2, Step::EncoderGd, g2.grad_tol_met);
        }
        if c1.energy < best.0.energy {
            best = (c1, Step::Encoder, false);
        }
        iterations += 1;
        rec.push(ctx, &best.0, best.1, best.2);
        cur = best.0;
        history.push(cur.energy);
        if stalled(&history, cfg.energy_rel_tol) {
            converged = true;
            break;
        }
    }
    Ok(Solution {
        x: cur.x,
        z: cur.z,
        trace: SolverTrace {
            records: rec.records,
            iterations,
            converged,
            elapsed: clock.elapsed(),
        },
    })
}

// Branch ladder from an explicit starting pair, appending to `rec`.
fn ladder(ctx: &EnergyCtx, start: Candidate, cfg: &JpmapConfig, rec: &mut Recorder) -> Result<(Candidate, usize, bool)> {
    let mut cur = start;
    rec.push(ctx, &cur, Step::Initial, false);
    let mut history = vec![cur.energy];
    let mut iterations = 0;
    while iterations < cfg.n_max {
        let n = iterations;
        let mut accepted: Option<(Candidate, Step, bool)> = None;
        let mut z1 = None;
        if n < cfg.n1 {
            let z = ctx.z_step_approx(&cur.x)?;
            let c1 = ctx.candidate(z.clone())?;
            if c1.energy < cur.energy {
                accepted = Some((c1, Step::Encoder, false));
            }
            z1 = Some(z);
        }
        if accepted.is_none() && n < cfg.n2 {
            let z = match z1 {
                Some(z) => z,
                None => ctx.z_step_approx(&cur.x)?,
            };
            let g2 = ctx.gd_refine_z(&cur.x, &z, &cfg.gd)?;
            let c2 = ctx.candidate(g2.z)?;
            if c2.energy < cur.energy {
                accepted = Some((c2, Step::EncoderGd, g2.grad_tol_met));
            }
        }
        let (next, step, tol_met) = match accepted {
            Some(a) => a,
            None => {
                let (c3, t) = warm_candidate(ctx, &cur, &cfg.gd)?;
                (c3, Step::WarmGd, t)
            }
        };
        iterations += 1;
        rec.push(ctx, &next, step, tol_met);
        cur = next;
        history.push(cur.energy);
        if stalled(&history, cfg.energy_rel_tol) {
            return Ok((cur, iterations, true));
        }
    }
    Ok((cur, iterations, false))
}

/// [`jpmap_fast_from`] starting at `z0 = μφ(x0)`.
pub fn jpmap_fast(ctx: &EnergyCtx, x0: &[f64], cfg: &JpmapConfig) -> Result<Solution> {
    let z0 = ctx.z_step_approx(x0)?;
    jpmap_fast_from(ctx, x0, &z0, cfg)
}

/// Branch ladder: branch 1 alone while `n < n1`, then branch 2 while
/// `n < n2`, falling back to branch 3 whenever the earlier branches fail to
/// lower `J1`.
pub fn jpmap_fast_from(ctx: &EnergyCtx, x0: &[f64], z0: &[f64], cfg: &JpmapConfig) -> Result<Solution> {
    cfg.validate()?;
    let clock = Stopwatch::start();
    let mut rec = Recorder { clock: &clock, epsilon: 0.0, records: Vec::new() };
    let start = start_point(ctx, x0.to_vec(), z0.to_vec())?;
    let (cur, iterations, converged) = ladder(ctx, start, cfg, &mut rec)?;
    Ok(Solution {
        x: cur.x,
        z: cur.z,
        trace: SolverTrace {
            records: rec.records,
            iterations,
            converged,
            elapsed: clock.elapsed(),
        },
    })
}

/// Continuation: joint MAP at `β0`, then repeated branch-3 solves while the
/// exponential multiplier update raises `β` until `‖μθ(z) − x‖² ≤ ε`.
///
/// When `max_outer` stages pass without meeting the bound the trace is
/// flagged as not converged and the stage with the smallest violation is
/// returned.
pub fn jpmap_continuation(
    model: &VaeModel,
    deg: &Degradation,
    x0: &[f64],
    ccfg: &ContinuationConfig,
    jcfg: &JpmapConfig,
) -> Result<Solution> {
    ccfg.validate()?;
    jcfg.validate()?;
    let clock = Stopwatch::start();
    let mut rec = Recorder { clock: &clock, epsilon: ccfg.epsilon, records: Vec::new() };
    let mut beta = ccfg.beta0.unwrap_or(1.0 / model.gamma2());
    let inner = JpmapConfig { n1: 0, n2: 0, ..*jcfg };
    let mut ctx = EnergyCtx::new(model, deg, Beta::Fixed(beta))?;
    let z0 = ctx.z_step_approx(x0)?;
    let start = start_point(&ctx, x0.to_vec(), z0)?;
    let (mut cur, mut iterations, _) = ladder(&ctx, start, jcfg, &mut rec)?;
    let mut best = cur.clone();
    let mut converged = false;
    let mut outer = 1;
    loop {
        let violation = cur.gap_sq() - ccfg.epsilon;
        if violation <= 0.0 {
            best = cur;
            converged = true;
            break;
        }
        if violation < best.gap_sq() - ccfg.epsilon {
            best = cur.clone();
        }
        if outer >= ccfg.max_outer {
            break;
        }
        beta *= libm::exp(ccfg.rho * violation / ccfg.epsilon).clamp(0.5, 10.0);
        ctx = ctx.with_beta(beta)?;
        let start = start_point(&ctx, cur.x, cur.z)?;
        let (next, it, _) = ladder(&ctx, start, &inner, &mut rec)?;
        iterations += it;
        cur = next;
        outer += 1;
    }
    Ok(Solution {
        x: best.x,
        z: best.z,
        trace: SolverTrace {
            records: rec.records,
            iterations,
            converged,
            elapsed: clock.elapsed(),
        },
    })
}

/// Splitting: branch-3 alternation on `J_{1,β}` along a geometric
/// schedule of `β`, starting from `z0 = μφ(x0)`.
pub fn mapz_splitting(model: &VaeModel, deg: &Degradation, x0: &[f64], cfg: &SplittingConfig) -> Result<Solution> {
    if cfg.schedule.is_empty() || cfg.schedule.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::invalid("schedule", "need at least one positive factor"));
    }
    let clock = Stopwatch::start();
    let mut rec = Recorder { clock: &clock, epsilon: 0.0, records: Vec::new() };
    let inner = JpmapConfig {
        n1: 0,
        n2: 0,
        n_max: cfg.inner_iters,
        gd: cfg.gd,
        ..JpmapConfig::default()
    };
    inner.validate()?;
    let base = 1.0 / model.gamma2();
    let mut ctx = EnergyCtx::new(model, deg, Beta::Fixed(base * cfg.schedule[0]))?;
    let mut x = x0.to_vec();
    let mut z = ctx.z_step_approx(x0)?;
    let mut iterations = 0;
    let mut converged = true;
    for factor in &cfg.schedule {
        ctx = ctx.with_beta(base * factor)?;
        let start = start_point(&ctx, x, z)?;
        let (cur, it, stage_converged) = ladder(&ctx, start, &inner, &mut rec)?;
        iterations += it;
        converged = stage_converged;
        x = cur.x;
        z = cur.z;
    }
    Ok(Solution {
        x,
        z,
        trace: SolverTrace {
            records: rec.records,
            iterations,
            converged,
            elapsed: clock.elapsed(),
        },
    })
}
