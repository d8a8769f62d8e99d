//! IDX containers as used by the MNIST distribution.
//!
//! Layout: two zero bytes, a dtype code, the rank, one big-endian `u32` per
//! dimension, then the row-major payload. Files may be gzip compressed.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{io_err, FormatError, Result};

pub const DTYPE_U8: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dtype: u8,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(FormatError::MalformedHeader(format!(
                "dims {dims:?} need {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(IdxTensor { dtype: DTYPE_U8, dims, data })
    }

    /// Pixels divided by 255.
    pub fn to_unit(&self) -> Vec<f64> {
        self.data.iter().map(|&b| f64::from(b) / 255.0).collect()
    }

    pub fn count(&self) -> usize {
        self.dims.first().copied().unwrap_or(1)
    }

    /// Product of all dimensions after the first.
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

fn element_size(dtype: u8) -> Option<usize> {
    match dtype {
        0x08 | 0x09 => Some(1),
        0x0B => Some(2),
        0x0C | 0x0D => Some(4),
        0x0E => Some(8),
        _ => None,
    }
}

/// Dtype and dims, plus the header length in bytes.
pub fn parse_header(bytes: &[u8]) -> Result<(u8, Vec<usize>, usize)> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated { expected: 4, found: bytes.len() });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(FormatError::BadMagic(format!("{:02x}{:02x}", bytes[0], bytes[1])));
    }
    let dtype = bytes[2];
    if element_size(dtype).is_none() {
        return Err(FormatError::BadMagic(format!("unknown dtype 0x{dtype:02x}")));
    }
    let rank = bytes[3] as usize;
    let header_len = 4 + 4 * rank;
    if bytes.len() < header_len {
        return Err(FormatError::Truncated { expected: header_len, found: bytes.len() });
    }
    let dims = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    Ok((dtype, dims, header_len))
}

/// Decode an IDX buffer. Only unsigned byte payloads are supported.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    let (dtype, dims, header_len) = parse_header(bytes)?;
    if dtype != DTYPE_U8 {
        return Err(FormatError::UnsupportedDtype(dtype));
    }
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::MalformedHeader("dimension product overflows".into()))?;
    let expected = header_len + payload;
    if bytes.len() < expected {
        return Err(FormatError::Truncated { expected, found: bytes.len() });
    }
    Ok(IdxTensor {
        dtype,
        dims,
        data: bytes[header_len..expected].to_vec(),
    })
}

pub fn encode_idx(tensor: &IdxTensor) -> Vec<u8> {
    let mut out = vec![0, 0, tensor.dtype, tensor.dims.len() as u8];
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    out
}

/// File contents, transparently gunzipped when they start with the gzip
/// magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(io_err(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn read_idx(path: &Path) -> Result<IdxTensor> {
    parse_idx(&read_maybe_gz(path)?)
}
