//! Portable float map (grayscale `Pf`) reader and writer.
//!
//! Rows are stored bottom-to-top as in the reference format. Invalid pixels
//! are written as NaN and the mask is rebuilt from NaN on load, so a
//! save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use super::{DepthMap, DisparityMap, ScalarMap};
use crate::error::{Error, Result};

const MAGIC: &str = "Pf";

/// Header bytes written for a `width x height` map.
pub fn header(width: usize, height: usize) -> String {
    format!("{MAGIC}\n{width} {height}\n-1.0\n")
}

pub fn encode(map: &ScalarMap) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let head = header(w, h);
    let mut out = Vec::with_capacity(head.len() + 4 * w * h);
    out.extend_from_slice(head.as_bytes());
    for y in (0..h).rev() {
        for x in 0..w {
            let v = map.get(x, y).unwrap_or(f32::NAN);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ScalarMap> {
    let bad = |reason: &str| Error::Format {
        format: "PFM",
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    // Three whitespace-separated header lines; the raster starts right after
    // the single whitespace byte that terminates the scale token.
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
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
        let token = std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?;
        tokens.push(token);
    }
    if pos >= bytes.len() {
        return Err(bad("missing raster"));
    }
    pos += 1;

    if tokens[0] != MAGIC {
        return Err(bad(&format!("expected `{MAGIC}` magic, found `{}`", tokens[0])));
    }
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be non-zero"));
    }
    let little_endian = scale < 0.0;

    let raster = &bytes[pos..];
    if raster.len() != 4 * width * height {
        return Err(bad(&format!(
            "raster holds {} bytes, expected {}",
            raster.len(),
            4 * width * height
        )));
    }

    let mut values = vec![0.0f32; width * height];
    let mut mask = vec![false; width * height];
    for (k, chunk) in raster.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let row = height - 1 - k / width;
        let idx = row * width + k % width;
        if !v.is_nan() {
            values[idx] = v;
            mask[idx] = true;
        }
    }
    ScalarMap::from_parts(width, height, values, mask)
}

pub fn save_map(map: &ScalarMap, path: &Path) -> Result<()> {
    fs::write(path, encode(map)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_map(path: &Path) -> Result<ScalarMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes, path)
}

pub fn save_disparity(map: &DisparityMap, path: &Path) -> Result<()> {
    save_map(map, path)
}

pub fn load_disparity(path: &Path) -> Result<DisparityMap> {
    load_map(path).map(DisparityMap)
}

pub fn save_depth(map: &DepthMap, path: &Path) -> Result<()> {
    save_map(map, path)
}

pub fn load_depth(path: &Path) -> Result<DepthMap> {
    load_map(path).map(DepthMap)
}
