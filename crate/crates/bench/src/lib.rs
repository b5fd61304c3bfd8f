//! Shared fixtures for the criterion benchmarks.

use calfoa_core::stream::{open_stream, StreamSpec};
use calfoa_core::Frame;

/// First frame of the default sparse-glyph scene.
pub fn glyph_frame(width: usize, height: usize) -> Frame {
    let spec = StreamSpec::sparse_glyphs(width, height, 10, 1, 7);
    open_stream(&spec).and_then(|s| s.frame(0)).expect("glyph scene")
}

/// Deterministic textured frame.
pub fn texture_frame(width: usize, height: usize) -> Frame {
    let px = (0..width * height).map(|i| ((i * 7919) % 257) as f64 / 256.0).collect();
    Frame::new(width, height, 0, px).expect("frame dimensions")
}
