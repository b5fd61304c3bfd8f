//! Binary PGM (P5, maxval 255) codec.

use super::Frame;
use crate::error::{Error, Result};

fn err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Pgm { offset, reason: reason.into() }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(start, format!("{what} out of range")))
    }
}

/// Decode a binary P5 image into a frame with index 0. Luminance is `byte / 255`.
pub fn read_pgm(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err(0, "bad magic, expected P5"));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = h.pos;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(err(maxval_at, format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(err(maxval_at, format!("unsupported maxval {maxval}")));
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(err(h.pos, "missing whitespace after maxval")),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| err(0, "dimensions overflow"))?;
    let payload = &bytes[h.pos..];
    if payload.len() < n {
        return Err(err(
            bytes.len(),
            format!("truncated payload: expected {n} bytes, found {}", payload.len()),
        ));
    }
    let pixels = payload[..n].iter().map(|&b| f64::from(b) / 255.0).collect();
    Frame::new(width, height, 0, pixels)
}

/// Encode 8-bit grey levels with the canonical header `P5\n<w> <h>\n255\n`.
pub fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    debug_assert_eq!(data.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

/// Encode a frame, quantizing luminance to `round(255 p)`.
pub fn write_pgm(frame: &Frame) -> Vec<u8> {
    encode_pgm(frame.width(), frame.height(), &frame.to_u8())
}
