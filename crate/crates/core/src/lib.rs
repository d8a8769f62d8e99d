//! Image restoration by alternating minimization of a joint energy over an
//! image and the latent code of a denoising VAE.
//!
//! This crate holds everything numerical: linear operators and a CG solver,
//! fully connected ELU networks with manual backpropagation, the (denoising)
//! Gaussian VAE, the degradation models, the joint energy `J1` and its
//! partial minimizers, the alternating solvers with their continuation
//! scheme, the latent-space baselines, and a linear-VAE oracle with closed
//! form answers.
//!
//! The crate is `no_std` (it needs `alloc`). Enabling the `std` feature
//! records wall-clock time in solver traces and lets the GEMM kernels pick
//! SIMD code paths at runtime.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod degrade;
pub mod energy;
pub mod linalg;
pub mod linops;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod solvers;
pub mod vae;

mod error;
mod timer;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use linops::LinOp;
pub use vae::VaeModel;
