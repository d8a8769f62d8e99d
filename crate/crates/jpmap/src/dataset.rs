//! Locating and loading MNIST.
//!
//! A data directory holds either the official files
//! (`train-images-idx3-ubyte`, `t10k-images-idx3-ubyte`, optionally
//! gzipped) or the bundled `digits-10k-images-idx3-ubyte.gz` subset, whose
//! last 500 digits are held out as the test split.

use std::path::{Path, PathBuf};

use crate::error::{FormatError, Result};
use crate::idx;

pub const DATA_DIR_ENV: &str = "JPMAP_DATA_DIR";
pub const SUBSET_STEM: &str = "digits-10k-images-idx3-ubyte";
pub const SUBSET_HOLDOUT: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct Images {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    /// `count` row-major images in `[0, 1]`, back to back
    pub pixels: Vec<f64>,
}

impl Images {
    pub fn dim(&self) -> usize {
        self.width * self.height
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    /// The first `n` images (all of them if there are fewer).
    pub fn take(&self, n: usize) -> Images {
        let count = n.min(self.count);
        Images {
            pixels: self.pixels[..count * self.dim()].to_vec(),
            count,
            ..*self
        }
    }

    fn split_at(self, n: usize) -> (Images, Images) {
        let d = self.dim();
        let mut head = self.pixels;
        let tail = head.split_off(n * d);
        let first = Images { width: self.width, height: self.height, count: n, pixels: head };
        let second = Images { width: self.width, height: self.height, count: self.count - n, pixels: tail };
        (first, second)
    }
}

#[derive(Debug, Clone)]
pub struct Mnist {
    pub train: Images,
    pub test: Images,
    /// files the splits came from
    pub source: Vec<PathBuf>,
}

/// The explicit directory if given, otherwise `$JPMAP_DATA_DIR`.
pub fn resolve_data_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
}

fn find(dir: &Path, stems: &[&str]) -> Option<PathBuf> {
    stems
        .iter()
        .flat_map(|s| [dir.join(s), dir.join(format!("{s}.gz"))])
        .find(|p| p.is_file())
}

pub fn read_images(path: &Path) -> Result<Images> {
    let t = idx::read_idx(path)?;
    if t.dims.len() != 3 {
        return Err(FormatError::MalformedHeader(format!("image file has dims {:?}", t.dims)));
    }
    Ok(Images {
        width: t.dims[2],
        height: t.dims[1],
        count: t.dims[0],
        pixels: t.to_unit(),
    })
}

pub fn load_mnist(dir: &Path) -> Result<Mnist> {
    let train = find(dir, &["train-images-idx3-ubyte", "train-images.idx3-ubyte"]);
    let test = find(dir, &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"]);
    if let (Some(train), Some(test)) = (train, test) {
        return Ok(Mnist {
            train: read_images(&train)?,
            test: read_images(&test)?,
            source: vec![train, test],
        });
    }
    let subset = find(dir, &[SUBSET_STEM]).ok_or_else(|| FormatError::MissingData(dir.to_path_buf()))?;
    let all = read_images(&subset)?;
    if all.count <= SUBSET_HOLDOUT {
        return Err(FormatError::MalformedHeader(format!("subset has only {} images", all.count)));
    }
    let keep = all.count - SUBSET_HOLDOUT;
    let (train, test) = all.split_at(keep);
    Ok(Mnist { train, test, source: vec![subset] })
}
