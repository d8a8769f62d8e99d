//! Restoration problems as named on the command line.

use clap::ValueEnum;
use jpmap_core::degrade::{self, Degradation};
use jpmap_core::linops::Kernel;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Denoise,
    Cs,
    Interp,
    Deblur,
    Sr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// noise std in gray levels (0–255)
    pub noise: f64,
    /// fraction of missing pixels
    pub p: f64,
    /// number of compressed measurements
    pub q: usize,
    /// decimation factor
    pub s: usize,
    /// side of the uniform blur kernel
    pub kernel: usize,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            kind: ProblemKind::Interp,
            noise: 10.0,
            p: 0.8,
            q: 100,
            s: 2,
            kernel: 3,
        }
    }
}

impl ProblemSpec {
    pub fn sigma(&self) -> f64 {
        self.noise / 255.0
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<(), String> {
        if !(self.noise > 0.0) || !self.noise.is_finite() {
            return Err(format!("noise must be positive, got {}", self.noise));
        }
        match self.kind {
            ProblemKind::Interp if !(0.0..1.0).contains(&self.p) => Err(format!("interp needs 0 <= p < 1, got {}", self.p)),
            ProblemKind::Cs if self.q == 0 => Err("cs needs q >= 1".into()),
            ProblemKind::Sr if self.s == 0 || width % self.s != 0 || height % self.s != 0 => {
                Err(format!("sr factor {} must divide {width}x{height}", self.s))
            }
            ProblemKind::Deblur if self.kernel == 0 => Err("deblur needs a kernel side >= 1".into()),
            _ => Ok(()),
        }
    }

    /// Short name used in metric tables, e.g. `interp-p0.8-n10`.
    pub fn label(&self) -> String {
        let n = self.noise;
        match self.kind {
            ProblemKind::Denoise => format!("denoise-n{n}"),
            ProblemKind::Cs => format!("cs-q{}-n{n}", self.q),
            ProblemKind::Interp => format!("interp-p{}-n{n}", self.p),
            ProblemKind::Deblur => format!("deblur-k{}-n{n}", self.kernel),
            ProblemKind::Sr => format!("sr-s{}-n{n}", self.s),
        }
    }

    /// The operator for a `width × height` image. Random operators (mask,
    /// sensing matrix) draw from `rng`.
    pub fn build<R: Rng + ?Sized>(&self, width: usize, height: usize, rng: &mut R) -> jpmap_core::Result<Degradation> {
        let d = width * height;
        let sigma = self.sigma();
        match self.kind {
            ProblemKind::Denoise => degrade::denoising(d, sigma),
            ProblemKind::Cs => degrade::compressed_sensing(self.q, d, sigma, rng),
            ProblemKind::Interp => degrade::interpolation(self.p, d, sigma, rng),
            ProblemKind::Deblur => degrade::deblur(Kernel::uniform(self.kernel)?, width, height, sigma),
            ProblemKind::Sr => degrade::superres(self.s, width, height, sigma),
        }
    }

    /// Build the operator and simulate an observation of `truth`, operator
    /// first, noise second, from the same stream.
    pub fn simulate<R: Rng + ?Sized>(&self, truth: &[f64], width: usize, height: usize, rng: &mut R) -> jpmap_core::Result<Degradation> {
        let mut deg = self.build(width, height, rng)?;
        deg.degrade(truth, rng)?;
        Ok(deg)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "kind": self.kind,
            "noise_gray": self.noise,
            "sigma": self.sigma(),
            "p": self.p,
            "q": self.q,
            "s": self.s,
            "kernel": self.kernel,
        })
    }
}
