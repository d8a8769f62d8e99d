//! Method grid over a batch of test images.
//!
//! Image `i` owns two random streams of the master seed: `2i` builds the
//! operator and draws the noise, `2i + 1` seeds the solver. Each
//! (image, method) task therefore sees the same numbers however the worker
//! pool schedules it, and rows are sorted before they are returned.

use jpmap_core::rng;
use jpmap_core::solvers::psnr;
use jpmap_core::VaeModel;
use rayon::prelude::*;

use crate::dataset::Images;
use crate::methods::{run_method, Method, SolverSettings};
use crate::metrics::{mean_and_stderr, MetricRecord};
use crate::problems::ProblemSpec;

#[derive(Debug, Clone)]
pub struct BenchmarkPlan {
    pub problem: ProblemSpec,
    pub methods: Vec<Method>,
    pub images: usize,
    pub seed: u64,
    pub jobs: usize,
    /// record wall time; without it `wall_ms` is zero so tables compare
    /// byte for byte
    pub timing: bool,
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub record: MetricRecord,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub runs: usize,
    pub psnr_mean: f64,
    pub psnr_stderr: f64,
    pub not_converged: usize,
}

pub fn problem_id(spec: &ProblemSpec, image: usize) -> String {
    format!("{}/img{image:05}", spec.label())
}

fn run_task(model: &VaeModel, test: &Images, plan: &BenchmarkPlan, image: usize, method: Method) -> anyhow::Result<BenchRow> {
    let truth = test.image(image);
    let stream = 2 * image as u64;
    let deg = plan
        .problem
        .simulate(truth, test.width, test.height, &mut rng::stream(plan.seed, stream))?;
    let out = run_method(method, model, &deg, &plan.settings, &mut rng::stream(plan.seed, stream + 1))?;
    let wall_ms = if plan.timing {
        out.solution.trace.elapsed.as_secs_f64() * 1e3
    } else {
        0.0
    };
    Ok(BenchRow {
        converged: out.solution.converged(),
        record: MetricRecord {
            problem: problem_id(&plan.problem, image),
            method: method.name().to_string(),
            seed: plan.seed,
            psnr_db: psnr(&out.solution.x, truth, 1.0),
            j1_final: out.j1_final,
            iterations: out.solution.trace.iterations as u64,
            wall_ms,
            constraint_residual: out.constraint_residual,
        },
    })
}

/// All rows, sorted by problem and method.
pub fn run_benchmark(model: &VaeModel, test: &Images, plan: &BenchmarkPlan) -> anyhow::Result<Vec<BenchRow>> {
    let images = plan.images.min(test.count);
    let tasks: Vec<(usize, Method)> = (0..images)
        .flat_map(|i| plan.methods.iter().map(move |m| (i, *m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(plan.jobs.max(1)).build()?;
    let mut rows = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, m)| run_task(model, test, plan, i, m))
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    rows.sort_by(|a, b| {
        (&a.record.problem, &a.record.method).cmp(&(&b.record.problem, &b.record.method))
    });
    Ok(rows)
}

/// Mean ± standard error of PSNR per method, in `methods` order.
pub fn summarize(rows: &[BenchRow], methods: &[Method]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|m| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.record.method == m.name()).collect();
            let psnrs: Vec<f64> = mine.iter().map(|r| r.record.psnr_db).collect();
            let (psnr_mean, psnr_stderr) = mean_and_stderr(&psnrs);
            SummaryRow {
                method: m.name().to_string(),
                runs: mine.len(),
                psnr_mean,
                psnr_stderr,
                not_converged: mine.iter().filter(|r| !r.converged).count(),
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], path: &std::path::Path) -> crate::error::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "runs", "psnr_mean", "psnr_stderr", "not_converged"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.runs.to_string(),
            crate::metrics::format_float(r.psnr_mean),
            crate::metrics::format_float(r.psnr_stderr),
            r.not_converged.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
