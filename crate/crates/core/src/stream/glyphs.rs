//! Digit-like glyphs: procedural strokes, or MNIST images from IDX files.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// Edge of a glyph tile in pixels (the MNIST tile size).
pub const GLYPH_EDGE: usize = 28;

/// A square grey-level tile, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub edge: usize,
    pub pixels: Vec<f64>,
}

// Stroke skeletons on a unit box, (x0, y0, x1, y1) with y pointing down.
const A: (f64, f64) = (0.0, 0.0);
const B: (f64, f64) = (1.0, 0.0);
const C: (f64, f64) = (0.0, 0.5);
const D: (f64, f64) = (1.0, 0.5);
const E: (f64, f64) = (0.0, 1.0);
const F: (f64, f64) = (1.0, 1.0);

fn strokes(digit: u8) -> Vec<((f64, f64), (f64, f64))> {
    match digit {
        0 => vec![(A, B), (B, F), (F, E), (E, A), (E, B)],
        1 => vec![((0.5, 0.0), (0.5, 1.0)), ((0.2, 0.25), (0.5, 0.0))],
        2 => vec![(A, B), (B, D), (D, E), (E, F)],
        3 => vec![(A, B), (B, F), (F, E), (C, D)],
        4 => vec![(A, C), (C, D), (B, F)],
        5 => vec![(B, A), (A, C), (C, D), (D, F), (F, E)],
        6 => vec![(B, A), (A, E), (E, F), (F, D), (D, C)],
        7 => vec![(A, B), (B, (0.35, 1.0))],
        8 => vec![(A, B), (B, F), (F, E), (E, A), (C, D)],
        _ => vec![(D, C), (C, A), (A, B), (B, F), (F, E)],
    }
}

fn segment_distance(px: f64, py: f64, (x0, y0): (f64, f64), (x1, y1): (f64, f64)) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (x0 + t * dx, y0 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Render digit class `digit` with seeded jitter in stroke width, size and slant.
pub fn procedural_glyph<R: Rng>(digit: u8, rng: &mut R) -> Glyph {
    let edge = GLYPH_EDGE;
    let half_width = rng.gen_range(0.9..1.4);
    let box_w = rng.gen_range(10.0..14.0);
    let box_h = rng.gen_range(16.0..20.0);
    let slant = rng.gen_range(-0.2..0.2);
    let ox = (edge as f64 - box_w) / 2.0;
    let oy = (edge as f64 - box_h) / 2.0;
    let to_px = |(x, y): (f64, f64)| {
        let yy = oy + y * box_h;
        let xx = ox + x * box_w + slant * (yy - edge as f64 / 2.0);
        (xx, yy)
    };
    let segs: Vec<_> = strokes(digit % 10)
        .into_iter()
        .map(|(p, q)| (to_px(p), to_px(q)))
        .collect();
    let mut pixels = vec![0.0; edge * edge];
    for y in 0..edge {
        for x in 0..edge {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let d = segs
                .iter()
                .map(|&(p, q)| segment_distance(px, py, p, q))
                .fold(f64::INFINITY, f64::min);
            pixels[y * edge + x] = (half_width + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    Glyph { edge, pixels }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("truncated header at byte {at}")))
}

/// Parse an `idx3-ubyte` image file (magic 2051) into square glyphs.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Glyph>> {
    let magic = be_u32(bytes, 0)?;
    if magic != 0x0803 {
        return Err(Error::Idx(format!("bad magic {magic:#x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows != cols || rows == 0 {
        return Err(Error::Idx(format!("non-square or empty images {rows}x{cols}")));
    }
    let n = rows * cols;
    let payload = &bytes[16..];
    if payload.len() < count * n {
        return Err(Error::Idx(format!(
            "truncated payload: {count} images need {} bytes, found {}",
            count * n,
            payload.len()
        )));
    }
    Ok(payload
        .chunks_exact(n)
        .take(count)
        .map(|c| Glyph {
            edge: rows,
            pixels: c.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
        .collect())
}

pub fn load_idx_images(path: &Path) -> Result<Vec<Glyph>> {
    let bytes = std::fs::read(path).map_err(|source| Error::FrameIo {
        frame: 0,
        path: Some(path.to_path_buf()),
        source,
    })?;
    parse_idx_images(&bytes)
}
