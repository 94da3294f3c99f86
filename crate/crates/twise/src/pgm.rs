//! Binary PGM (P5) containers for depth, label, σ and signed maps.
//!
//! Depth uses the 16-bit convention `value = round(depth_m × 256)` with 0
//! reserved for invalid pixels (65535 ≙ 255.996 m). Label maps are 8-bit.
//! Signed maps (error differences, ambiguity) are offset-encoded as
//! `value = clamp(round(x·scale) + 32768, 0, 65535)` with the scale recorded
//! in the accompanying JSON sidecar. 16-bit samples are big-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::depth::{DepthMap, Grid};
use crate::{Error, Result};

/// Scaling factor of the 16-bit depth convention (1/256 m per level).
pub const DEPTH_SCALE: f64 = 256.0;

/// Offset added to signed samples before clamping to u16.
pub const SIGNED_OFFSET: i64 = 32768;

fn write_p5(path: &Path, width: usize, height: usize, maxval: u32, samples: &[u16]) -> Result<()> {
    debug_assert_eq!(samples.len(), width * height);
    let mut buf = Vec::with_capacity(32 + samples.len() * 2);
    write!(buf, "P5\n{width} {height}\n{maxval}\n")?;
    if maxval > 255 {
        for s in samples {
            buf.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        for s in samples {
            buf.push(*s as u8);
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Raw {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u16>,
}

fn read_p5(path: &Path) -> Result<Raw> {
    let bytes = fs::read(path)?;
    let err = |m: &str| Error::Pgm(format!("{}: {m}", path.display()));
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err("not a binary PGM (missing P5 magic)"));
    }
    // Header: magic, width, height, maxval as whitespace-separated tokens,
    // with # comments allowed between them.
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(err("malformed header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("malformed header"))?;
        *field = tok.parse::<u32>().map_err(|_| err("malformed header"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(err("missing raster separator"));
    }
    pos += 1;
    let (width, height, maxval) = (fields[0] as usize, fields[1] as usize, fields[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(err("unsupported maxval"));
    }
    let n = width * height;
    let samples = if maxval > 255 {
        if bytes.len() - pos < n * 2 {
            return Err(err("truncated raster"));
        }
        bytes[pos..pos + n * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        if bytes.len() - pos < n {
            return Err(err("truncated raster"));
        }
        bytes[pos..pos + n].iter().map(|b| *b as u16).collect()
    };
    Ok(Raw {
        width,
        height,
        maxval,
        samples,
    })
}

/// Write a depth map with the 16-bit `round(depth × 256)` convention.
/// Valid depths are clamped to at least one level so they stay distinguishable
/// from the invalid code 0.
pub fn write_depth(path: impl AsRef<Path>, map: &DepthMap) -> Result<()> {
    let samples: Vec<u16> = map
        .data()
        .iter()
        .map(|&d| {
            if d > 0.0 {
                ((d * DEPTH_SCALE).round() as i64).clamp(1, 65535) as u16
            } else {
                0
            }
        })
        .collect();
    write_p5(path.as_ref(), map.width(), map.height(), 65535, &samples)
}

/// Read a depth map written by [`write_depth`].
pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let raw = read_p5(path.as_ref())?;
    let data = raw
        .samples
        .iter()
        .map(|&s| s as f64 / DEPTH_SCALE)
        .collect();
    DepthMap::from_data(raw.width, raw.height, data)
}

/// Write an 8-bit label map.
pub fn write_labels(path: impl AsRef<Path>, width: usize, height: usize, ids: &[u8]) -> Result<()> {
    if ids.len() != width * height {
        return Err(Error::config("label buffer does not match dimensions"));
    }
    let samples: Vec<u16> = ids.iter().map(|&v| v as u16).collect();
    write_p5(path.as_ref(), width, height, 255, &samples)
}

/// Read an 8-bit label map.
pub fn read_labels(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let raw = read_p5(path.as_ref())?;
    if raw.maxval > 255 {
        return Err(Error::Pgm("label map must be 8-bit".into()));
    }
    let ids = raw.samples.iter().map(|&s| s as u8).collect();
    Ok((raw.width, raw.height, ids))
}

/// Write a unit-interval grid (σ maps) scaled by 65535.
pub fn write_unit(path: impl AsRef<Path>, grid: &Grid) -> Result<()> {
    let samples: Vec<u16> = grid
        .data()
        .iter()
        .map(|&v| ((v * 65535.0).round() as i64).clamp(0, 65535) as u16)
        .collect();
    write_p5(path.as_ref(), grid.width(), grid.height(), 65535, &samples)
}

/// Read a unit-interval grid written by [`write_unit`].
pub fn read_unit(path: impl AsRef<Path>) -> Result<Grid> {
    let raw = read_p5(path.as_ref())?;
    let data = raw.samples.iter().map(|&s| s as f64 / 65535.0).collect();
    Grid::from_data(raw.width, raw.height, data)
}

/// Write a signed grid as `clamp(round(x·scale) + 32768, 0, 65535)`.
pub fn write_signed(path: impl AsRef<Path>, grid: &Grid, scale: f64) -> Result<()> {
    let samples: Vec<u16> = grid
        .data()
        .iter()
        .map(|&v| ((v * scale).round() as i64 + SIGNED_OFFSET).clamp(0, 65535) as u16)
        .collect();
    write_p5(path.as_ref(), grid.width(), grid.height(), 65535, &samples)
}

/// Read a signed grid written by [`write_signed`] with the same scale.
pub fn read_signed(path: impl AsRef<Path>, scale: f64) -> Result<Grid> {
    let raw = read_p5(path.as_ref())?;
    let data = raw
        .samples
        .iter()
        .map(|&s| (s as i64 - SIGNED_OFFSET) as f64 / scale)
        .collect();
    Grid::from_data(raw.width, raw.height, data)
}
