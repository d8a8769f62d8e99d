#![allow(dead_code)]

use std::path::PathBuf;

use jpmap::dataset::{load_mnist, Mnist};
use jpmap_core::energy::GdConfig;
use jpmap_core::solvers::JpmapConfig;
use jpmap_core::vae::{train_dvae, TrainConfig};
use jpmap_core::VaeModel;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn mnist() -> Mnist {
    load_mnist(&data_dir()).expect("bundled MNIST subset")
}

/// Desk-scale training: 10 epochs over the 9,500 training digits of the
/// bundled subset, with a larger step than the long recipe so the short
/// run gets somewhere.
pub fn desk_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

pub fn train_model(data: &Mnist, epochs: usize) -> VaeModel {
    train_dvae(&data.train.pixels, data.train.dim(), &desk_config(epochs))
        .expect("training succeeds")
        .model
}

/// Solver budgets small enough for single-core test runs.
pub fn desk_jpmap() -> JpmapConfig {
    JpmapConfig {
        n1: 5,
        n2: 15,
        n_max: 40,
        gd: GdConfig { max_iters: 50, ..GdConfig::default() },
        energy_rel_tol: 1e-6,
    }
}
