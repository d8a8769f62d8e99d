//! Binary greymap (P5) images with maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{io_err, FormatError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// row-major, row 0 at the top
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(FormatError::MalformedHeader(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }
}

/// `floor(255·clamp(v, 0, 1) + 0.5)`, so halves round up.
pub fn quantize(v: f64) -> u8 {
    let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (255.0 * c + 0.5).floor() as u8
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&v| quantize(v)));
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::MalformedHeader(format!("missing {what}")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if !bytes.starts_with(b"P5") {
        return Err(FormatError::BadMagic("expected P5".into()));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(FormatError::BadMaxval(maxval));
    }
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(FormatError::MalformedHeader("no whitespace after maxval".into())),
    }
    let n = width * height;
    let data = &bytes[cur.pos..];
    if data.len() < n {
        return Err(FormatError::Truncated { expected: cur.pos + n, found: bytes.len() });
    }
    let pixels = data[..n].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(GrayImage { width, height, pixels })
}

pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(io_err(path))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&fs::read(path).map_err(io_err(path))?)
}

/// Tile equally sized images into a grid `columns` wide, filling rows
/// first; unused cells stay black.
pub fn montage(images: &[Vec<f64>], width: usize, height: usize, columns: usize) -> Result<GrayImage> {
    if columns == 0 || images.iter().any(|im| im.len() != width * height) {
        return Err(FormatError::MalformedHeader("montage tiles must share one size".into()));
    }
    let rows = images.len().div_ceil(columns).max(1);
    let (w, h) = (columns * width, rows * height);
    let mut pixels = vec![0.0; w * h];
    for (k, im) in images.iter().enumerate() {
        let (tr, tc) = (k / columns, k % columns);
        for r in 0..height {
            let dst = (tr * height + r) * w + tc * width;
            pixels[dst..dst + width].copy_from_slice(&im[r * width..(r + 1) * width]);
        }
    }
    GrayImage::new(w, h, pixels)
}
