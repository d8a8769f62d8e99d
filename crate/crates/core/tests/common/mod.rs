#![allow(dead_code)]

use jpmap_core::degrade::{self, Degradation};
use jpmap_core::linops::Kernel;
use jpmap_core::oracle::LinearVae;
use jpmap_core::rng::{seeded, standard_normal_vec, ChaCha8Rng};
use jpmap_core::VaeModel;
use rand::Rng;

/// Dense solve by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, bi)| {
        let mut r = row.clone();
        r.push(*bi);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// Central finite-difference gradient.
pub fn fd_grad<F: FnMut(&[f64]) -> f64>(mut f: F, at: &[f64], h: f64) -> Vec<f64> {
    let mut p = at.to_vec();
    (0..at.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-300)
}

/// Small random ELU model with a non-trivial decoder.
pub fn random_model(d: usize, l: usize, hidden: &[usize], seed: u64) -> VaeModel {
    VaeModel::new(d, l, hidden, 0.05, &mut seeded(seed)).unwrap()
}

/// One of the five degradation kinds on a `side × side` image.
pub fn random_degradation(kind: usize, side: usize, rng: &mut ChaCha8Rng) -> Degradation {
    let d = side * side;
    let sigma = rng.random_range(0.02..0.3);
    let mut deg = match kind % 5 {
        0 => degrade::denoising(d, sigma).unwrap(),
        1 => degrade::compressed_sensing(d / 2 + 1, d, sigma, rng).unwrap(),
        2 => degrade::interpolation(rng.random_range(0.0..0.7), d, sigma, rng).unwrap(),
        3 => degrade::deblur(Kernel::uniform(3).unwrap(), side, side, sigma).unwrap(),
        _ => degrade::superres(2, side, side, sigma).unwrap(),
    };
    let truth: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    deg.degrade(&truth, rng).unwrap();
    deg
}

/// Linear VAE with `γ² ∈ [0.2, 1]`; together with `VᵀV ≈ I` this keeps the
/// alternating minimization contracting by at most about 0.9 per sweep.
pub fn random_linear(d: usize, l: usize, rng: &mut ChaCha8Rng) -> LinearVae {
    let gamma2 = rng.random_range(0.2..1.0);
    LinearVae::random(d, l, gamma2, rng).unwrap()
}

pub fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    standard_normal_vec(rng, n)
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
