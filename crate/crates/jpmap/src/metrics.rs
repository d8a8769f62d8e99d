//! Per-run metric tables.
//!
//! Floats are written in scientific notation with 17 significant digits,
//! which is enough for every `f64` to parse back to the same bits.

use std::io;
use std::path::Path;

use serde::Deserialize;

use crate::error::{io_err, Result};

pub const HEADER: [&str; 8] = [
    "problem",
    "method",
    "seed",
    "psnr_db",
    "j1_final",
    "iterations",
    "wall_ms",
    "constraint_residual",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MetricRecord {
    pub problem: String,
    pub method: String,
    pub seed: u64,
    pub psnr_db: f64,
    pub j1_final: f64,
    pub iterations: u64,
    pub wall_ms: f64,
    /// `‖μθ(ẑ) − x̂‖²` of the returned pair
    pub constraint_residual: f64,
}

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl MetricRecord {
    fn fields(&self) -> [String; 8] {
        [
            self.problem.clone(),
            self.method.clone(),
            self.seed.to_string(),
            format_float(self.psnr_db),
            format_float(self.j1_final),
            self.iterations.to_string(),
            format_float(self.wall_ms),
            format_float(self.constraint_residual),
        ]
    }
}

pub fn write_csv_to<W: io::Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_csv(records: &[MetricRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_csv_to(records, io::BufWriter::new(file))
}

pub fn read_csv_from<R: io::Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricRecord>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_csv_from(io::BufReader::new(file))
}

/// Mean and standard error of the mean; the error is zero for fewer than
/// two values.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_csv_to(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "problem,method,seed,psnr_db,j1_final,iterations,wall_ms,constraint_residual\n"
        );
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn stderr() {
        let (m, s) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_stderr(&[7.0]), (7.0, 0.0));
    }
}
