//! Linear forward operators with adjoints, and a conjugate-gradient solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// A convolution kernel stored row-major; both sides must be odd so the
/// kernel has a well-defined center.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    width: usize,
    height: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(width: usize, height: usize, taps: Vec<f64>) -> Result<Self> {
        if width % 2 == 0 || height % 2 == 0 {
            return Err(Error::invalid("kernel", "kernel sides must be odd"));
        }
        Error::check_dim(width * height, taps.len())?;
        Ok(Kernel {
            width,
            height,
            taps,
        })
    }

    /// `size×size` box filter summing to one.
    pub fn uniform(size: usize) -> Result<Self> {
        let n = size * size;
        Kernel::new(size, size, vec![1.0 / n as f64; n])
    }

    pub fn delta() -> Self {
        Kernel {
            width: 1,
            height: 1,
            taps: vec![1.0],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// Same-size 2-D convolution with zero padding outside the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Convolution {
    pub width: usize,
    pub height: usize,
    pub kernel: Kernel,
}

impl Convolution {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width as isize, self.height as isize);
        let (kw, kh) = (self.kernel.width as isize, self.kernel.height as isize);
        let (cx, cy) = (kw / 2, kh / 2);
        let mut out = vec![0.0; x.len()];
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for a in 0..kh {
                    let p = i + cy - a;
                    if p < 0 || p >= h {
                        continue;
                    }
                    for b in 0..kw {
                        let q = j + cx - b;
                        if q < 0 || q >= w {
                            continue;
                        }
                        acc += self.kernel.taps[(a * kw + b) as usize] * x[(p * w + q) as usize];
                    }
                }
                out[(i * w + j) as usize] = acc;
            }
        }
        out
    }

    // correlation with the same kernel
    fn adjoint(&self, v: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width as isize, self.height as isize);
        let (kw, kh) = (self.kernel.width as isize, self.kernel.height as isize);
        let (cx, cy) = (kw / 2, kh / 2);
        let mut out = vec![0.0; v.len()];
        for p in 0..h {
            for q in 0..w {
                let mut acc = 0.0;
                for a in 0..kh {
                    let i = p - cy + a;
                    if i < 0 || i >= h {
                        continue;
                    }
                    for b in 0..kw {
                        let j = q - cx + b;
                        if j < 0 || j >= w {
                            continue;
                        }
                        acc += self.kernel.taps[(a * kw + b) as usize] * v[(i * w + j) as usize];
                    }
                }
                out[(p * w + q) as usize] = acc;
            }
        }
        out
    }
}

/// Average over `factor×factor` blocks, then subsample.
#[derive(Debug, Clone, PartialEq)]
pub struct Decimation {
    pub width: usize,
    pub height: usize,
    pub factor: usize,
}

impl Decimation {
    fn out_width(&self) -> usize {
        self.width / self.factor
    }

    fn out_height(&self) -> usize {
        self.height / self.factor
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let s = self.factor;
        let ow = self.out_width();
        let scale = 1.0 / (s * s) as f64;
        let mut out = vec![0.0; ow * self.out_height()];
        for i in 0..self.height {
            for j in 0..self.width {
                out[(i / s) * ow + j / s] += scale * x[i * self.width + j];
            }
        }
        out
    }

    fn adjoint(&self, v: &[f64]) -> Vec<f64> {
        let s = self.factor;
        let ow = self.out_width();
        let scale = 1.0 / (s * s) as f64;
        let mut out = vec![0.0; self.width * self.height];
        for i in 0..self.height {
            for j in 0..self.width {
                out[i * self.width + j] = scale * v[(i / s) * ow + j / s];
            }
        }
        out
    }
}

/// Linear operator `A: R^in_dim → R^out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub enum LinOp {
    Identity { dim: usize },
    /// Diagonal 0/1 matrix; dropped entries are zeroed, the size is kept.
    Mask { keep: Vec<bool> },
    Dense(Matrix),
    Convolution(Convolution),
    Decimation(Decimation),
}

impl LinOp {
    pub fn convolution(width: usize, height: usize, kernel: Kernel) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image size", "must be positive"));
        }
        Ok(LinOp::Convolution(Convolution {
            width,
            height,
            kernel,
        }))
    }

    pub fn decimation(width: usize, height: usize, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("factor", "must be positive"));
        }
        if width % factor != 0 || height % factor != 0 {
            return Err(Error::invalid("factor", "must divide both image sides"));
        }
        Ok(LinOp::Decimation(Decimation {
            width,
            height,
            factor,
        }))
    }

    pub fn in_dim(&self) -> usize {
        match self {
            LinOp::Identity { dim } => *dim,
            LinOp::Mask { keep } => keep.len(),
            LinOp::Dense(m) => m.cols(),
            LinOp::Convolution(c) => c.width * c.height,
            LinOp::Decimation(d) => d.width * d.height,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            LinOp::Identity { dim } => *dim,
            LinOp::Mask { keep } => keep.len(),
            LinOp::Dense(m) => m.rows(),
            LinOp::Convolution(c) => c.width * c.height,
            LinOp::Decimation(d) => d.out_width() * d.out_height(),
        }
    }

    /// `A u`
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.in_dim(), u.len())?;
        Ok(match self {
            LinOp::Identity { .. } => u.to_vec(),
            LinOp::Mask { keep } => u
                .iter()
                .zip(keep)
                .map(|(v, k)| if *k { *v } else { 0.0 })
                .collect(),
            LinOp::Dense(m) => m.matvec(u)?,
            LinOp::Convolution(c) => c.apply(u),
            LinOp::Decimation(d) => d.apply(u),
        })
    }

    /// `Aᵀ v`
    pub fn adjoint_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.out_dim(), v.len())?;
        Ok(match self {
            LinOp::Identity { .. } | LinOp::Mask { .. } => self.apply(v)?,
            LinOp::Dense(m) => m.matvec_t(v)?,
            LinOp::Convolution(c) => c.adjoint(v),
            LinOp::Decimation(d) => d.adjoint(v),
        })
    }

    /// `AᵀA u`
    pub fn normal_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.adjoint_apply(&self.apply(u)?)
    }

    /// Diagonal of `AᵀA` when that matrix is diagonal, enabling closed-form
    /// solves of `(AᵀA + cI) x = b`.
    pub fn normal_diagonal(&self) -> Option<Vec<f64>> {
        match self {
            LinOp::Identity { dim } => Some(vec![1.0; *dim]),
            LinOp::Mask { keep } => Some(keep.iter().map(|k| if *k { 1.0 } else { 0.0 }).collect()),
            _ => None,
        }
    }

    /// Materialize `A` column by column.
    pub fn to_dense(&self) -> Matrix {
        let n = self.in_dim();
        let mut e = vec![0.0; n];
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                e[j] = 1.0;
                let c = self.apply(&e).expect("basis vector has in_dim entries");
                e[j] = 0.0;
                c
            })
            .collect();
        Matrix::from_columns(self.out_dim(), &cols).expect("columns have out_dim entries")
    }

    /// Estimate of the largest eigenvalue of `AᵀA` by power iteration from
    /// a fixed start vector.
    pub fn normal_max_eigenvalue(&self, iterations: usize) -> f64 {
        let n = self.in_dim();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * (i % 3) as f64).collect();
        let mut lambda = 0.0;
        for _ in 0..iterations.max(1) {
            let nv = linalg::norm(&v);
            if nv == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let w = self.normal_apply(&v).expect("in_dim vector");
            lambda = linalg::dot(&v, &w);
            v = w;
        }
        lambda
    }
}

/// Solve `M x = b` for a symmetric positive-definite `M` given as a closure.
///
/// Stops when `‖M x − b‖ ≤ tol·‖b‖` (recursively updated residual).
pub fn cg_solve<F>(mut mat_apply: F, b: &[f64], tol: f64, maxiter: usize) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = linalg::norm(b);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let target = tol * b_norm;
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = linalg::norm_sq(&r);
    for _ in 0..maxiter {
        if libm::sqrt(rs) <= target {
            return Ok(x);
        }
        let mp = mat_apply(&p);
        Error::check_dim(n, mp.len())?;
        let pmp = linalg::dot(&p, &mp);
        if !(pmp > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rs / pmp;
        linalg::axpy(alpha, &p, &mut x);
        linalg::axpy(-alpha, &mp, &mut r);
        let rs_new = linalg::norm_sq(&r);
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_new;
    }
    if libm::sqrt(rs) <= target {
        Ok(x)
    } else {
        Err(Error::CgNotConverged {
            iterations: maxiter,
            residual: libm::sqrt(rs) / b_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_apply_and_adjoint() {
        let op = LinOp::Identity { dim: 3 };
        assert_eq!(op.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(op.adjoint_apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn mask_zeroes_dropped_entries() {
        let op = LinOp::Mask {
            keep: vec![true, false, true],
        };
        assert_eq!(op.apply(&[5.0, 7.0, 9.0]).unwrap(), vec![5.0, 0.0, 9.0]);
    }

    #[test]
    fn dense_apply_and_adjoint() {
        let op = LinOp::Dense(Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap());
        assert_eq!(op.apply(&[2.0, 3.0]).unwrap(), vec![5.0, 3.0]);
        assert_eq!(op.adjoint_apply(&[1.0, 1.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let op = LinOp::Identity { dim: 3 };
        assert_eq!(
            op.apply(&[1.0]).unwrap_err(),
            Error::DimensionMismatch {
                expected: 3,
                actual: 1
            }
        );
        assert!(op.adjoint_apply(&[1.0; 4]).is_err());
    }

    #[test]
    fn delta_kernel_is_identity() {
        let op = LinOp::convolution(4, 3, Kernel::delta()).unwrap();
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        assert_eq!(op.apply(&x).unwrap(), x);
    }

    #[test]
    fn box_blur_of_constant_is_constant_inside() {
        let op = LinOp::convolution(6, 6, Kernel::uniform(3).unwrap()).unwrap();
        let y = op.apply(&[0.7; 36]).unwrap();
        for i in 1..5 {
            for j in 1..5 {
                assert!((y[i * 6 + j] - 0.7).abs() < 1e-15);
            }
        }
        // corners see 4 of 9 taps under zero padding
        assert!((y[0] - 0.7 * 4.0 / 9.0).abs() < 1e-15);
        assert!((y[1] - 0.7 * 6.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn decimation_shapes_and_constants() {
        let op = LinOp::decimation(28, 28, 2).unwrap();
        assert_eq!(op.out_dim(), 196);
        let y = op.apply(&[0.3; 784]).unwrap();
        assert!(y.iter().all(|v| (v - 0.3).abs() < 1e-15));
        let id = LinOp::decimation(5, 4, 1).unwrap();
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        assert_eq!(id.apply(&x).unwrap(), x);
        assert!(LinOp::decimation(28, 28, 3).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(Kernel::new(2, 3, vec![0.0; 6]).is_err());
    }

    #[test]
    fn cg_trivial_systems() {
        let x = cg_solve(|v| v.to_vec(), &[4.0, 5.0], 1e-12, 10).unwrap();
        assert_eq!(x, vec![4.0, 5.0]);
        let m = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let x = cg_solve(|v| m.matvec(v).unwrap(), &[3.0, 3.0], 1e-14, 10).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let m = Matrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 10.0, 0.0], &[0.0, 0.0, 100.0]]).unwrap();
        let err = cg_solve(|v| m.matvec(v).unwrap(), &[1.0, 1.0, 1.0], 1e-14, 1).unwrap_err();
        assert!(matches!(err, Error::CgNotConverged { iterations: 1, residual } if residual > 1e-14));
        assert!(cg_solve(|v| v.to_vec(), &[1.0], 0.0, 1).is_err());
    }

    #[test]
    fn power_iteration_on_decimation() {
        // AᵀA for block averaging has top eigenvalue 1/s²
        let op = LinOp::decimation(8, 8, 2).unwrap();
        assert!((op.normal_max_eigenvalue(50) - 0.25).abs() < 1e-12);
    }
}
