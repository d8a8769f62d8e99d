//! `JVAE1` model files.
//!
//! ```text
//! JVAE1
//! data_dim 784
//! latent_dim 8
//! encoder 784 500 500 16
//! decoder 8 500 500 784
//! sigma_dvae 0.058823529411764705
//! gamma2 0.1
//! <encoder params><decoder params>   f64 little-endian, per layer W then b
//! <checksum>                         u64 little-endian FNV-1a of all bytes above
//! ```

use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use jpmap_core::nn::Mlp;
use jpmap_core::VaeModel;

use crate::error::{io_err, FormatError, Result};

pub const MAGIC: &str = "JVAE1";
const HEADER_LINES: usize = 7;

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn join(sizes: &[usize]) -> String {
    sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn encode_model(model: &VaeModel) -> Vec<u8> {
    let header = format!(
        "{MAGIC}\ndata_dim {}\nlatent_dim {}\nencoder {}\ndecoder {}\nsigma_dvae {:?}\ngamma2 {:?}\n",
        model.data_dim(),
        model.latent_dim(),
        join(model.encoder().sizes()),
        join(model.decoder().sizes()),
        model.sigma_dvae(),
        model.gamma2(),
    );
    let mut out = header.into_bytes();
    for v in model.encoder().params().iter().chain(model.decoder().params()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| FormatError::MalformedHeader(format!("expected `{key}`, found `{line}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| FormatError::MalformedHeader(format!("bad {what} `{s}`")))
}

fn parse_sizes(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split_whitespace().map(|t| parse_num(t, what)).collect()
}

pub fn decode_model(bytes: &[u8]) -> Result<VaeModel> {
    let mut lines = Vec::with_capacity(HEADER_LINES);
    let mut pos = 0;
    while lines.len() < HEADER_LINES {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(FormatError::Truncated { expected: pos + 1, found: bytes.len() })?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| FormatError::MalformedHeader("header is not UTF-8".into()))?;
        if lines.is_empty() && line != MAGIC {
            return Err(if line.starts_with("JVAE") {
                FormatError::VersionMismatch { found: line.to_string(), expected: MAGIC }
            } else {
                FormatError::BadMagic(line.chars().take(16).collect())
            });
        }
        lines.push(line);
        pos += end + 1;
    }
    let data_dim: usize = parse_num(field(lines[1], "data_dim")?, "data_dim")?;
    let latent_dim: usize = parse_num(field(lines[2], "latent_dim")?, "latent_dim")?;
    let enc_sizes = parse_sizes(field(lines[3], "encoder")?, "encoder size")?;
    let dec_sizes = parse_sizes(field(lines[4], "decoder")?, "decoder size")?;
    let sigma_dvae: f64 = parse_num(field(lines[5], "sigma_dvae")?, "sigma_dvae")?;
    let gamma2: f64 = parse_num(field(lines[6], "gamma2")?, "gamma2")?;
    if enc_sizes.first() != Some(&data_dim)
        || enc_sizes.last() != Some(&(2 * latent_dim))
        || dec_sizes.first() != Some(&latent_dim)
        || dec_sizes.last() != Some(&data_dim)
    {
        return Err(FormatError::MalformedHeader("layer sizes disagree with data_dim/latent_dim".into()));
    }
    let encoder = Mlp::zeros(&enc_sizes)?;
    let decoder = Mlp::zeros(&dec_sizes)?;
    let (n_enc, n_dec) = (encoder.num_params(), decoder.num_params());
    let expected = pos + 8 * (n_enc + n_dec) + 8;
    if bytes.len() != expected {
        return Err(FormatError::Truncated { expected, found: bytes.len() });
    }
    let body_end = expected - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("eight bytes"));
    if stored != checksum(&bytes[..body_end]) {
        return Err(FormatError::ChecksumMismatch);
    }
    let values: Vec<f64> = bytes[pos..body_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    let encoder = Mlp::from_parts(&enc_sizes, values[..n_enc].to_vec())?;
    let decoder = Mlp::from_parts(&dec_sizes, values[n_enc..].to_vec())?;
    Ok(VaeModel::from_parts(encoder, decoder, gamma2, sigma_dvae)?)
}

pub fn save_model(model: &VaeModel, path: &Path) -> Result<Vec<u8>> {
    let bytes = encode_model(model);
    fs::write(path, &bytes).map_err(io_err(path))?;
    Ok(bytes)
}

/// The model and the raw file bytes.
pub fn load_model(path: &Path) -> Result<(VaeModel, Vec<u8>)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok((decode_model(&bytes)?, bytes))
}

pub fn check_latent_dim(model: &VaeModel, expected: usize) -> Result<()> {
    if model.latent_dim() != expected {
        return Err(FormatError::LatentMismatch { found: model.latent_dim(), expected });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use jpmap_core::rng::seeded;

    fn tiny() -> VaeModel {
        VaeModel::new(6, 2, &[4], 0.05, &mut seeded(9)).unwrap()
    }

    #[test]
    fn round_trip() {
        let m = tiny();
        let bytes = encode_model(&m);
        assert!(bytes.starts_with(b"JVAE1\ndata_dim 6\nlatent_dim 2\nencoder 6 4 4\ndecoder 2 4 6\n"));
        assert_eq!(decode_model(&bytes).unwrap(), m);
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = encode_model(&tiny());
        let n = bytes.len();
        bytes[n - 20] ^= 1;
        assert!(matches!(decode_model(&bytes), Err(FormatError::ChecksumMismatch)));
    }

    #[test]
    fn version_and_magic() {
        let bytes = encode_model(&tiny());
        let mut v2 = bytes.clone();
        v2[4] = b'2';
        assert!(matches!(decode_model(&v2), Err(FormatError::VersionMismatch { .. })));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(FormatError::BadMagic(_))));
    }
}
