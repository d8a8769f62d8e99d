//! Command-line interface.
//!
//! Exit codes: 0 success, 1 a solver flagged non-convergence (or an oracle
//! check failed), 2 usage or IO error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use jpmap_core::degrade::Degradation;
use jpmap_core::energy::{Beta, EnergyCtx};
use jpmap_core::linops::{Kernel, LinOp};
use jpmap_core::oracle::{self, LinearVae};
use jpmap_core::solvers::{self, psnr};
use jpmap_core::vae::{self, TrainConfig};
use jpmap_core::{degrade, linalg, rng, VaeModel};
use log::{info, warn};
use rand::Rng;
use serde_json::json;

use crate::benchmark::{self, BenchmarkPlan};
use crate::checkpoint;
use crate::dataset::{self, Images};
use crate::manifest::{CheckpointRef, Manifest};
use crate::methods::{run_method, Method, SolverSettings};
use crate::metrics::{self, MetricRecord};
use crate::pgm::{self, GrayImage};
use crate::problems::{ProblemKind, ProblemSpec};

#[derive(Debug, Parser)]
#[command(name = "jpmap", version, about = "Image restoration with a denoising VAE prior")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a denoising VAE on MNIST
    Train(TrainArgs),
    /// Draw images from the prior
    Sample(SampleArgs),
    /// Degrade one image and restore it
    Restore(RestoreArgs),
    /// Run methods over a batch of test images
    Benchmark(BenchmarkArgs),
    /// Check the solvers against closed-form linear models
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// MNIST directory; falls back to $JPMAP_DATA_DIR
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// checkpoint to write; the loss curve and manifest go beside it
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// encoder input corruption, gray levels
    #[arg(long, default_value_t = 15.0)]
    pub sigma_dvae: f64,
    #[arg(long, default_value_t = 8)]
    pub latent_dim: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [500usize, 500])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// train on the first N training images only
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long, short, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// decode z = 0 instead of sampling
    #[arg(long)]
    pub zero: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value_t = ProblemKind::Interp)]
    pub problem: ProblemKind,
    /// noise std, gray levels
    #[arg(long, default_value_t = 10.0)]
    pub noise: f64,
    /// interp: fraction of missing pixels
    #[arg(long, default_value_t = 0.8)]
    pub p: f64,
    /// cs: number of measurements
    #[arg(long, default_value_t = 100)]
    pub q: usize,
    /// sr: decimation factor
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    /// deblur: side of the uniform kernel
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
}

impl ProblemArgs {
    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            kind: self.problem,
            noise: self.noise,
            p: self.p,
            q: self.q,
            s: self.s,
            kernel: self.kernel,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    /// iteration cap of each branch-ladder run
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Adam steps per latent refinement
    #[arg(long)]
    pub gd_iters: Option<usize>,
    #[arg(long)]
    pub gd_lr: Option<f64>,
    /// constraint bound α in gray levels, ε = (α/255)²·d
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// iterations of csgm, mcsgm, pulse and pgdgan
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// iterations per β of the splitting schedule
    #[arg(long)]
    pub splitting_inner: Option<usize>,
}

impl SolverArgs {
    pub fn settings(&self) -> SolverSettings {
        let mut s = SolverSettings::default();
        let j = &mut s.jpmap;
        if let Some(v) = self.n_max {
            j.n_max = v;
            j.n2 = j.n2.min(v);
            j.n1 = j.n1.min(v);
        }
        if let Some(v) = self.n2 {
            j.n2 = v;
            j.n1 = j.n1.min(v);
        }
        if let Some(v) = self.n1 {
            j.n1 = v;
        }
        if let Some(v) = self.gd_iters {
            j.gd.max_iters = v;
        }
        if let Some(v) = self.gd_lr {
            j.gd.lr = v;
        }
        if let Some(v) = self.epsilon {
            s.epsilon_gray = v;
        }
        if let Some(v) = self.rho {
            s.rho = v;
        }
        if let Some(v) = self.max_outer {
            s.max_outer = v;
        }
        if let Some(v) = self.iters {
            s.latent.iters = v;
            s.pgd.iters = v;
        }
        if let Some(v) = self.restarts {
            s.restarts = v;
        }
        if let Some(v) = self.splitting_inner {
            s.splitting_inner = v;
        }
        s
    }

    fn constraint_flags(&self) -> bool {
        self.epsilon.is_some() || self.rho.is_some() || self.max_outer.is_some()
    }
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// MNIST directory; falls back to $JPMAP_DATA_DIR
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// test-split image to degrade
    #[arg(long, default_value_t = 0, conflicts_with = "input")]
    pub index: usize,
    /// ground-truth PGM instead of a test image
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Jpmap)]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// reject checkpoints with another latent dimension
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::Jpmap, Method::Csgm])]
    pub methods: Vec<Method>,
    /// number of test images
    #[arg(long, short = 'n', default_value_t = 100)]
    pub images: usize,
    /// master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// worker threads
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// record wall time per run (otherwise wall_ms is 0)
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// pixels per linear model (at most 200)
    #[arg(long, default_value_t = 36)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub latent: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// relative error allowed between the solver and the closed form
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub maxiter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// also write report.json and manifest.json here
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// a solver stopped without meeting its criterion, or a check failed
    Flagged,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Flagged => 1,
        }
    }
}

pub fn main_entry() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::Train(a) => train(&a),
        Command::Sample(a) => sample(&a),
        Command::Restore(a) => restore(&a),
        Command::Benchmark(a) => bench(&a),
        Command::OracleCheck(a) => oracle_check(&a),
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn data_dir(explicit: Option<&Path>) -> anyhow::Result<PathBuf> {
    dataset::resolve_data_dir(explicit)
        .with_context(|| format!("no data directory: pass --data-dir or set {}", dataset::DATA_DIR_ENV))
}

/// Side of a square image with `d` pixels.
pub fn image_side(d: usize) -> anyhow::Result<usize> {
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        bail!("data dimension {d} is not a square image");
    }
    Ok(side)
}

fn load_checked(path: &Path, latent_dim: Option<usize>) -> anyhow::Result<(VaeModel, CheckpointRef)> {
    let (model, bytes) = checkpoint::load_model(path)?;
    if let Some(l) = latent_dim {
        checkpoint::check_latent_dim(&model, l)?;
    }
    Ok((model, CheckpointRef::new(path, &bytes)))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn train(a: &TrainArgs) -> anyhow::Result<Status> {
    let dir = data_dir(a.data_dir.as_deref())?;
    let mnist = dataset::load_mnist(&dir)?;
    let images = match a.limit {
        Some(n) => mnist.train.take(n),
        None => mnist.train,
    };
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        sigma_dvae: a.sigma_dvae / 255.0,
        latent_dim: a.latent_dim,
        hidden: a.hidden.clone(),
        seed: a.seed,
    };
    info!("training on {} images of {}x{}", images.count, images.width, images.height);
    let outcome = vae::train_dvae_with(&images.pixels, images.dim(), &config, |epoch, loss| {
        info!("epoch {:>4}  loss {loss:.4}", epoch + 1);
    })?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let bytes = checkpoint::save_model(&outcome.model, &a.out)?;
    let loss_path = sibling(&a.out, "loss.csv");
    let mut w = csv::Writer::from_path(&loss_path)?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in outcome.epoch_losses.iter().enumerate() {
        w.write_record([(e + 1).to_string(), metrics::format_float(*l)])?;
    }
    w.flush()?;

    let mut manifest = Manifest::new(
        "train",
        json!({
            "data_dir": dir.display().to_string(),
            "data_files": mnist.source.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "train_images": images.count,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "sigma_dvae_gray": a.sigma_dvae,
            "sigma_dvae": config.sigma_dvae,
            "latent_dim": config.latent_dim,
            "hidden": config.hidden,
            "seed": config.seed,
            "final_gamma2": outcome.model.gamma2(),
        }),
    );
    manifest.checkpoint = Some(CheckpointRef::new(&a.out, &bytes));
    manifest.outputs = vec![a.out.display().to_string(), loss_path.display().to_string()];
    manifest.write(&sibling(&a.out, "manifest.json"))?;
    println!(
        "wrote {} (final loss {:.4})",
        a.out.display(),
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(Status::Success)
}

fn sample(a: &SampleArgs) -> anyhow::Result<Status> {
    let (model, ckpt) = load_checked(&a.model, None)?;
    let side = image_side(model.data_dim())?;
    if a.n == 0 && !a.zero {
        bail!("--n must be at least 1");
    }
    create_dir(&a.out_dir)?;
    let (name, img) = if a.zero {
        let mode = model.decode(&vec![0.0; model.latent_dim()])?;
        ("prior_mode.pgm", GrayImage::new(side, side, mode)?)
    } else {
        let samples = model.sample_prior(a.n, &mut rng::seeded(a.seed))?;
        let columns = (a.n as f64).sqrt().ceil() as usize;
        ("samples.pgm", pgm::montage(&samples, side, side, columns)?)
    };
    let out = a.out_dir.join(name);
    pgm::write_pgm(&img, &out)?;
    let mut manifest = Manifest::new("sample", json!({ "n": a.n, "seed": a.seed, "zero": a.zero }));
    manifest.checkpoint = Some(ckpt);
    manifest.outputs = vec![out.display().to_string()];
    manifest.write(&a.out_dir.join("manifest.json"))?;
    println!("wrote {}", out.display());
    Ok(Status::Success)
}

/// The observation as a picture: `y` itself when it lives on the image
/// grid (or the decimated grid), `Aᵀy` otherwise.
fn observation_image(deg: &Degradation, width: usize, height: usize) -> anyhow::Result<GrayImage> {
    Ok(match deg.op() {
        LinOp::Decimation(dec) => GrayImage::new(width / dec.factor, height / dec.factor, deg.observation().to_vec())?,
        LinOp::Dense(_) => GrayImage::new(width, height, deg.back_projection())?,
        _ => GrayImage::new(width, height, deg.observation().to_vec())?,
    })
}

fn restore(a: &RestoreArgs) -> anyhow::Result<Status> {
    let (model, ckpt) = load_checked(&a.model, a.latent_dim)?;
    let spec = a.problem.spec();
    let (truth, width, height, source) = match &a.input {
        Some(path) => {
            let img = pgm::read_pgm(path)?;
            (img.pixels, img.width, img.height, path.display().to_string())
        }
        None => {
            let dir = data_dir(a.data_dir.as_deref())?;
            let test = dataset::load_mnist(&dir)?.test;
            if a.index >= test.count {
                bail!("--index {} is out of range ({} test images)", a.index, test.count);
            }
            (test.image(a.index).to_vec(), test.width, test.height, format!("{}#test{}", dir.display(), a.index))
        }
    };
    if truth.len() != model.data_dim() {
        bail!("image has {} pixels but the model expects {}", truth.len(), model.data_dim());
    }
    spec.validate(width, height).map_err(anyhow::Error::msg)?;
    if !a.method.uses_constraint() && a.solver.constraint_flags() {
        warn!("{} ignores --epsilon, --rho and --max-outer", a.method.name());
    }
    let settings = a.solver.settings();
    let deg = spec.simulate(&truth, width, height, &mut rng::stream(a.seed, 0))?;
    let out = run_method(a.method, &model, &deg, &settings, &mut rng::stream(a.seed, 1))?;
    let sol = &out.solution;

    create_dir(&a.out_dir)?;
    let paths = ["degraded.pgm", "restored.pgm", "truth.pgm", "metrics.csv"].map(|n| a.out_dir.join(n));
    pgm::write_pgm(&observation_image(&deg, width, height)?, &paths[0])?;
    pgm::write_pgm(&GrayImage::new(width, height, sol.x.clone())?, &paths[1])?;
    pgm::write_pgm(&GrayImage::new(width, height, truth.clone())?, &paths[2])?;
    let record = MetricRecord {
        problem: spec.label(),
        method: a.method.name().to_string(),
        seed: a.seed,
        psnr_db: psnr(&sol.x, &truth, 1.0),
        j1_final: out.j1_final,
        iterations: sol.trace.iterations as u64,
        wall_ms: sol.trace.elapsed.as_secs_f64() * 1e3,
        constraint_residual: out.constraint_residual,
    };
    metrics::write_csv(std::slice::from_ref(&record), &paths[3])?;

    let mut manifest = Manifest::new(
        "restore",
        json!({
            "source": source,
            "problem": spec.to_json(),
            "method": a.method,
            "seed": a.seed,
            "solver": settings.to_json(model.data_dim()),
        }),
    );
    manifest.checkpoint = Some(ckpt);
    manifest.outputs = paths.iter().map(|p| p.display().to_string()).collect();
    manifest.converged = Some(sol.converged());
    manifest.write(&a.out_dir.join("manifest.json"))?;
    println!(
        "{} {}: psnr {:.2} dB, J1 {:.4}, residual {:.4}, {} iterations",
        record.problem, record.method, record.psnr_db, record.j1_final, record.constraint_residual, record.iterations
    );
    if sol.converged() {
        Ok(Status::Success)
    } else {
        warn!("{} stopped before converging", a.method.name());
        Ok(Status::Flagged)
    }
}

fn bench(a: &BenchmarkArgs) -> anyhow::Result<Status> {
    let (model, ckpt) = load_checked(&a.model, a.latent_dim)?;
    let dir = data_dir(a.data_dir.as_deref())?;
    let test: Images = dataset::load_mnist(&dir)?.test;
    if test.dim() != model.data_dim() {
        bail!("test images have {} pixels but the model expects {}", test.dim(), model.data_dim());
    }
    let spec = a.problem.spec();
    spec.validate(test.width, test.height).map_err(anyhow::Error::msg)?;
    if a.methods.is_empty() || a.images == 0 {
        bail!("need at least one method and one image");
    }
    if a.solver.constraint_flags() && !a.methods.iter().any(|m| m.uses_constraint()) {
        warn!("no selected method uses --epsilon, --rho or --max-outer");
    }
    let mut methods = a.methods.clone();
    methods.dedup();
    let plan = BenchmarkPlan {
        problem: spec,
        methods,
        images: a.images,
        seed: a.seed,
        jobs: a.jobs,
        timing: a.timing,
        settings: a.solver.settings(),
    };
    let rows = benchmark::run_benchmark(&model, &test, &plan)?;
    let summary = benchmark::summarize(&rows, &plan.methods);

    create_dir(&a.out_dir)?;
    let metrics_path = a.out_dir.join("metrics.csv");
    let summary_path = a.out_dir.join("summary.csv");
    let records: Vec<MetricRecord> = rows.iter().map(|r| r.record.clone()).collect();
    metrics::write_csv(&records, &metrics_path)?;
    benchmark::write_summary(&summary, &summary_path)?;
    let flagged: usize = summary.iter().map(|s| s.not_converged).sum();

    let mut manifest = Manifest::new(
        "benchmark",
        json!({
            "data_dir": dir.display().to_string(),
            "problem": plan.problem.to_json(),
            "methods": plan.methods,
            "images": plan.images.min(test.count),
            "seed": plan.seed,
            "jobs": plan.jobs,
            "timing": plan.timing,
            "solver": plan.settings.to_json(model.data_dim()),
        }),
    );
    manifest.checkpoint = Some(ckpt);
    manifest.outputs = vec![metrics_path.display().to_string(), summary_path.display().to_string()];
    manifest.converged = Some(flagged == 0);
    manifest.write(&a.out_dir.join("manifest.json"))?;

    for s in &summary {
        println!(
            "{:<10} {:>4} runs  PSNR {:.2} ± {:.2} dB  ({} not converged)",
            s.method, s.runs, s.psnr_mean, s.psnr_stderr, s.not_converged
        );
    }
    Ok(if flagged == 0 { Status::Success } else { Status::Flagged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrial {
    pub operator: &'static str,
    pub iterations: usize,
    pub converged: bool,
    /// `‖(x, z) − (x*, z*)‖ / ‖(x*, z*)‖`
    pub joint_rel_err: f64,
    /// `‖μφ(x) − E[z|x]‖∞ / max(1, ‖E[z|x]‖∞)`
    pub encoder_err: f64,
}

pub const ENCODER_TOL: f64 = 1e-10;

fn random_operator<R: Rng + ?Sized>(kind: usize, dim: usize, rng: &mut R) -> anyhow::Result<(&'static str, Degradation)> {
    let sigma = rng.random_range(0.02..0.3);
    let side = image_side(dim).ok();
    Ok(match (kind % 5, side) {
        (1, _) => ("cs", degrade::compressed_sensing(dim / 2 + 1, dim, sigma, rng)?),
        (2, _) if dim > 1 => ("interp", degrade::interpolation(rng.random_range(0.0..0.5), dim, sigma, rng)?),
        (3, Some(s)) if s >= 3 => ("deblur", degrade::deblur(Kernel::uniform(3)?, s, s, sigma)?),
        (4, Some(s)) if s % 2 == 0 => ("sr", degrade::superres(2, s, s, sigma)?),
        _ => ("denoise", degrade::denoising(dim, sigma)?),
    })
}

/// One linear-model comparison: the exact alternation against the dense
/// joint solve, and the encoder against the posterior mean.
pub fn oracle_trial(dim: usize, latent: usize, maxiter: usize, seed: u64, trial: u64) -> anyhow::Result<OracleTrial> {
    let mut r = rng::stream(seed, trial);
    let gamma2 = r.random_range(0.2..1.0);
    let lv = LinearVae::random(dim, latent, gamma2, &mut r)?;
    let (operator, mut deg) = random_operator(trial as usize, dim, &mut r)?;
    let truth = lv.decode(&rng::standard_normal_vec(&mut r, latent))?;
    deg.degrade(&truth, &mut r)?;

    let model = oracle::build_exact_vae(&lv)?;
    let ctx = EnergyCtx::new(&model, &deg, Beta::Native)?;
    let sol = solvers::jpmap_exact(&ctx, &deg.back_projection(), maxiter)?;
    let (x_star, z_star) = oracle::analytic_joint_map(&lv, &deg)?;
    let diff = linalg::dist_sq(&sol.x, &x_star) + linalg::dist_sq(&sol.z, &z_star);
    let scale = linalg::norm_sq(&x_star) + linalg::norm_sq(&z_star);
    let joint_rel_err = (diff / scale).sqrt();

    let post = oracle::linear_posterior(&lv, &truth)?;
    let enc = ctx.z_step_approx(&truth)?;
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let encoder_err = inf(&linalg::sub(&enc, &post.mean)) / inf(&post.mean).max(1.0);
    Ok(OracleTrial {
        operator,
        iterations: sol.trace.iterations,
        converged: sol.converged(),
        joint_rel_err,
        encoder_err,
    })
}

fn oracle_check(a: &OracleArgs) -> anyhow::Result<Status> {
    if !(a.tol > 0.0) || !a.tol.is_finite() {
        bail!("--tol must be a positive finite number, got {}", a.tol);
    }
    if a.dim == 0 || a.dim > oracle::MAX_DENSE_DIM {
        bail!("--dim must lie in 1..={}", oracle::MAX_DENSE_DIM);
    }
    if a.latent == 0 || a.trials == 0 {
        bail!("--latent and --trials must be positive");
    }
    let mut failures = 0;
    let mut report = Vec::with_capacity(a.trials);
    for t in 0..a.trials {
        let r = oracle_trial(a.dim, a.latent, a.maxiter, a.seed, t as u64)?;
        let pass = r.joint_rel_err <= a.tol && r.encoder_err <= ENCODER_TOL;
        failures += usize::from(!pass);
        println!(
            "trial {t:>3}  {:<8} iterations {:>4}  joint_rel_err {:.3e}  encoder_err {:.3e}  {}",
            r.operator,
            r.iterations,
            r.joint_rel_err,
            r.encoder_err,
            if pass { "PASS" } else { "FAIL" }
        );
        report.push(json!({
            "trial": t,
            "operator": r.operator,
            "iterations": r.iterations,
            "converged": r.converged,
            "joint_rel_err": r.joint_rel_err,
            "encoder_err": r.encoder_err,
            "pass": pass,
        }));
    }
    let verdict = if failures == 0 { "PASS" } else { "FAIL" };
    println!("oracle-check: {verdict} ({}/{} trials, dim {}, latent {}, tol {:e})", a.trials - failures, a.trials, a.dim, a.latent, a.tol);
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        let report_path = dir.join("report.json");
        std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", report_path.display()))?;
        let mut manifest = Manifest::new(
            "oracle-check",
            json!({
                "dim": a.dim, "latent": a.latent, "trials": a.trials, "tol": a.tol,
                "encoder_tol": ENCODER_TOL, "maxiter": a.maxiter, "seed": a.seed,
            }),
        );
        manifest.outputs = vec![report_path.display().to_string()];
        manifest.converged = Some(failures == 0);
        manifest.write(&dir.join("manifest.json"))?;
    }
    Ok(if failures == 0 { Status::Success } else { Status::Flagged })
}
