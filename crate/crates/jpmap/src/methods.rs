//! Solver selection and the per-run metrics shared by `restore` and
//! `benchmark`.

use clap::ValueEnum;
use jpmap_core::degrade::Degradation;
use jpmap_core::energy::{Beta, EnergyCtx, GdConfig};
use jpmap_core::linalg;
use jpmap_core::rng;
use jpmap_core::solvers::{self, ContinuationConfig, JpmapConfig, LatentConfig, PgdConfig, Solution, SplittingConfig};
use jpmap_core::VaeModel;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// continuation until the decoder constraint holds
    Jpmap,
    /// branch ladder at the model's own β
    JpmapBeta,
    /// splitting along a fixed β schedule
    Splitting,
    Csgm,
    Mcsgm,
    Pulse,
    Pgdgan,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Jpmap => "jpmap",
            Method::JpmapBeta => "jpmap-beta",
            Method::Splitting => "splitting",
            Method::Csgm => "csgm",
            Method::Mcsgm => "mcsgm",
            Method::Pulse => "pulse",
            Method::Pgdgan => "pgdgan",
        }
    }

    /// Only the continuation uses `ε`, `ρ` and the outer budget.
    pub fn uses_constraint(self) -> bool {
        self == Method::Jpmap
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub jpmap: JpmapConfig,
    /// constraint bound in gray levels: `ε = (α/255)²·d`
    pub epsilon_gray: f64,
    pub rho: f64,
    pub max_outer: usize,
    pub splitting_inner: usize,
    pub latent: LatentConfig,
    pub restarts: usize,
    pub pgd: PgdConfig,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let c = ContinuationConfig::default_for(1);
        SolverSettings {
            jpmap: JpmapConfig::default(),
            epsilon_gray: 3.0,
            rho: c.rho,
            max_outer: c.max_outer,
            splitting_inner: 60,
            latent: LatentConfig::default(),
            restarts: 10,
            pgd: PgdConfig::default(),
        }
    }
}

fn gd_json(gd: &GdConfig) -> Value {
    json!({ "lr": gd.lr, "max_iters": gd.max_iters, "grad_tol": gd.grad_tol, "patience": gd.patience })
}

impl SolverSettings {
    pub fn continuation(&self, data_dim: usize) -> ContinuationConfig {
        ContinuationConfig {
            rho: self.rho,
            max_outer: self.max_outer,
            ..ContinuationConfig::for_gray_levels(self.epsilon_gray, data_dim)
        }
    }

    pub fn splitting(&self) -> SplittingConfig {
        SplittingConfig {
            inner_iters: self.splitting_inner,
            gd: self.jpmap.gd,
            ..SplittingConfig::default()
        }
    }

    pub fn to_json(&self, data_dim: usize) -> Value {
        let j = &self.jpmap;
        json!({
            "jpmap": {
                "n1": j.n1, "n2": j.n2, "n_max": j.n_max,
                "energy_rel_tol": j.energy_rel_tol,
                "gd": gd_json(&j.gd),
            },
            "continuation": {
                "epsilon_gray": self.epsilon_gray,
                "epsilon": self.continuation(data_dim).epsilon,
                "rho": self.rho,
                "max_outer": self.max_outer,
            },
            "splitting": { "schedule": self.splitting().schedule, "inner_iters": self.splitting_inner },
            "latent": { "iters": self.latent.iters, "lr": self.latent.lr },
            "mcsgm_restarts": self.restarts,
            "pgdgan": {
                "iters": self.pgd.iters,
                "eta": self.pgd.eta,
                "projection": { "iters": self.pgd.projection.iters, "lr": self.pgd.projection.lr },
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub solution: Solution,
    /// `J1` at the model's own β
    pub j1_final: f64,
    /// `‖μθ(ẑ) − x̂‖²`
    pub constraint_residual: f64,
}

/// Run `method` from `x0 = Aᵀy`. Random starting codes come from `rng`.
pub fn run_method<R: Rng + ?Sized>(
    method: Method,
    model: &VaeModel,
    deg: &Degradation,
    settings: &SolverSettings,
    rng: &mut R,
) -> jpmap_core::Result<RunOutcome> {
    let x0 = deg.back_projection();
    let ctx = EnergyCtx::new(model, deg, Beta::Native)?;
    let l = model.latent_dim();
    let solution = match method {
        Method::Jpmap => solvers::jpmap_continuation(model, deg, &x0, &settings.continuation(model.data_dim()), &settings.jpmap)?,
        Method::JpmapBeta => solvers::jpmap_fast(&ctx, &x0, &settings.jpmap)?,
        Method::Splitting => solvers::mapz_splitting(model, deg, &x0, &settings.splitting())?,
        Method::Csgm => solvers::csgm(model, deg, &rng::standard_normal_vec(rng, l), &settings.latent)?,
        Method::Mcsgm => solvers::mcsgm(model, deg, settings.restarts, &settings.latent, rng)?,
        Method::Pulse => solvers::pulse(model, deg, &rng::standard_normal_vec(rng, l), &settings.latent)?,
        Method::Pgdgan => solvers::pgd_gan(model, deg, &x0, &settings.pgd)?,
    };
    let decoded = model.decode(&solution.z)?;
    let constraint_residual = linalg::dist_sq(&decoded, &solution.x);
    let j1_final = ctx.j1_with_decoded(&solution.x, &solution.z, &decoded)?;
    Ok(RunOutcome { solution, j1_final, constraint_residual })
}
