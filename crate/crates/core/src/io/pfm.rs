//! Portable float map: `Pf` (one channel) or `PF` (three channels), 32-bit
//! floats, rows stored bottom-up, negative scale meaning little-endian.

use std::path::Path;

use super::write_bytes;
use crate::error::{Error, Result};
use crate::types::{DepthField, Image};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

pub fn encode_pfm(height: usize, width: usize, channels: usize, data: &[f64], endian: Endian) -> Vec<u8> {
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let scale = match endian {
        Endian::Little => "-1.0",
        Endian::Big => "1.0",
    };
    let mut out = format!("{tag}\n{width} {height}\n{scale}\n").into_bytes();
    out.reserve(height * width * channels * 4);
    let row = width * channels;
    for v in (0..height).rev() {
        for &x in &data[v * row..(v + 1) * row] {
            let x = x as f32;
            out.extend_from_slice(&match endian {
                Endian::Little => x.to_le_bytes(),
                Endian::Big => x.to_be_bytes(),
            });
        }
    }
    out
}

/// Parses a PFM byte stream into `(height, width, channels, top-down data)`.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let bad = |m: &str| Error::format(path, m);
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let channels = match fields[0] {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(bad(&format!("unknown magic `{other}`"))),
    };
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    if width == 0 || height == 0 || scale == 0.0 || !scale.is_finite() {
        return Err(bad("degenerate header"));
    }
    let endian = if scale < 0.0 { Endian::Little } else { Endian::Big };
    let n = height * width * channels;
    let payload = bytes.get(pos..).unwrap_or_default();
    if payload.len() < n * 4 {
        return Err(bad(&format!("truncated payload: {} of {} bytes", payload.len(), n * 4)));
    }
    let row = width * channels;
    let mut data = vec![0.0; n];
    for (i, chunk) in payload[..n * 4].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = match endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = x as f64;
    }
    Ok((height, width, channels, data))
}

fn read_raw(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn read_pfm(path: &Path) -> Result<DepthField> {
    let (h, w, c, data) = read_raw(path)?;
    if c != 1 {
        return Err(Error::format(path, "expected a single-channel map"));
    }
    DepthField::new(h, w, data)
}

pub fn read_pfm_image(path: &Path) -> Result<Image> {
    let (h, w, c, data) = read_raw(path)?;
    Image::new(h, w, c, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_pfm(path: &Path, depth: &DepthField) -> Result<()> {
    write_bytes(
        path,
        &encode_pfm(depth.height, depth.width, 1, &depth.values, Endian::Little),
    )
}

pub fn write_pfm_image(path: &Path, image: &Image) -> Result<()> {
    let (h, w, c) = image.shape();
    write_bytes(path, &encode_pfm(h, w, c, image.data(), Endian::Little))
}
