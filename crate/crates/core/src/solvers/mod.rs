//! Restoration algorithms.
//!
//! The JPMAP family alternates an x-step with one of three z-candidates:
//! the encoder mean (branch 1), gradient descent started there (branch 2),
//! and gradient descent warm-started from the current latent (branch 3).
//! The continuation and splitting schemes drive the coupling weight `β`
//! upward until the image sits on the decoder range. CSGM, PULSE and
//! PGD-GAN work in latent space over the same decoder.

use alloc::vec::Vec;
use core::time::Duration;

mod baselines;
mod jpmap;

pub use baselines::{csgm, mapz_objective, mcsgm, pgd_gan, project_to_range, pulse, LatentConfig, PgdConfig};
pub use jpmap::{
    jpmap_approx, jpmap_continuation, jpmap_exact, jpmap_fast, jpmap_fast_from, mapz_splitting, ContinuationConfig,
    JpmapConfig, SplittingConfig,
};

/// What produced a trace record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// the starting point of a run or of a continuation stage
    Initial,
    /// z = encoder mean (branch 1)
    Encoder,
    /// gradient descent from the encoder mean (branch 2)
    EncoderGd,
    /// gradient descent from the current latent (branch 3)
    WarmGd,
    /// an iterate of a latent-space baseline
    Baseline,
}

impl Step {
    /// Branch index `1..=3` for the JPMAP candidates.
    pub fn branch(self) -> Option<u8> {
        match self {
            Step::Encoder => Some(1),
            Step::EncoderGd => Some(2),
            Step::WarmGd => Some(3),
            Step::Initial | Step::Baseline => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// `J1` at the current `β` for JPMAP runs, the method's own objective
    /// for baselines
    pub objective: f64,
    pub step: Step,
    /// coupling weight, absent for baselines
    pub beta: Option<f64>,
    /// `‖μθ(z) − x‖² − ε`, with `ε = 0` outside continuation
    pub residual: f64,
    /// whether the z-refinement behind this step met its gradient tolerance
    pub grad_tol_met: bool,
    pub latent_norm: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub iterations: usize,
    /// false when an iteration budget ran out before the stopping rule fired
    pub converged: bool,
    pub elapsed: Duration,
}

impl SolverTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.residual)
    }

    /// Counts of accepted branches 1, 2 and 3.
    pub fn branch_histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for r in &self.records {
            if let Some(b) = r.step.branch() {
                h[b as usize - 1] += 1;
            }
        }
        h
    }

    /// Largest increase of the objective between consecutive records that
    /// share the same `β`; zero or negative for a monotone run.
    pub fn max_increase(&self) -> f64 {
        self.records
            .windows(2)
            .filter(|w| w[0].beta.is_some() && w[0].beta == w[1].beta)
            .map(|w| w[1].objective - w[0].objective)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Equality of everything except wall-clock times.
    pub fn same_path(&self, other: &SolverTrace) -> bool {
        self.iterations == other.iterations
            && self.converged == other.converged
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.objective.to_bits() == b.objective.to_bits()
                    && a.step == b.step
                    && a.beta.map(f64::to_bits) == b.beta.map(f64::to_bits)
                    && a.residual.to_bits() == b.residual.to_bits()
                    && a.grad_tol_met == b.grad_tol_met
                    && a.latent_norm.to_bits() == b.latent_norm.to_bits()
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub trace: SolverTrace,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.trace.converged
    }
}

pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &[f64], reference: &[f64], peak: f64) -> f64 {
    assert_eq!(x.len(), reference.len(), "psnr of vectors with different lengths");
    let mse = crate::linalg::dist_sq(x, reference) / x.len() as f64;
    if mse == 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * libm::log10(peak * peak / mse)).min(PSNR_CAP_DB)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_values() {
        assert_eq!(psnr(&[0.3, 0.4], &[0.3, 0.4], 1.0), 99.0);
        assert!((psnr(&[0.1], &[0.0], 1.0) - 20.0).abs() < 1e-12);
        let e = 10.0 / 255.0;
        assert!((psnr(&[e, e], &[0.0, 0.0], 1.0) - 20.0 * libm::log10(25.5)).abs() < 1e-12);
        assert!((20.0 * libm::log10(25.5) - 28.1308).abs() < 1e-4);
    }

    #[test]
    fn branch_labels() {
        assert_eq!(Step::Encoder.branch(), Some(1));
        assert_eq!(Step::WarmGd.branch(), Some(3));
        assert_eq!(Step::Baseline.branch(), None);
    }
}
