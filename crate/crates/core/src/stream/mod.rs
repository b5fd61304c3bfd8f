//! Frame sources: synthetic generators, PGM directories and raw planar files.

mod glyphs;
mod pgm;

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub use glyphs::{load_idx_images, parse_idx_images, procedural_glyph, Glyph, GLYPH_EDGE};
pub use pgm::{encode_pgm, read_pgm, write_pgm};

/// One grayscale retina image, row-major luminance in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    index: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, index: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!("empty frame {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidFrame(format!(
                "pixel {i} = {} outside [0,1]",
                pixels[i]
            )));
        }
        Ok(Self { width, height, index, pixels })
    }

    pub fn zeros(width: usize, height: usize, index: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self { width, height, index, pixels: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    /// Grey levels `round(255 p)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| (p * 255.0).round() as u8).collect()
    }

    pub fn from_u8(width: usize, height: usize, index: usize, data: &[u8]) -> Result<Self> {
        Self::new(width, height, index, data.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Snap to the 8-bit grid so generated frames survive a PGM round trip exactly.
fn quantize(p: f64) -> f64 {
    (p.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// A Gaussian blob with constant velocity, reflecting at the borders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlobLayout {
    /// `count` blobs at seeded positions and headings, all moving at `speed` px/frame.
    Random { count: usize, speed: f64, sigma: f64 },
    Explicit(Vec<Blob>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StreamKind {
    /// Static dark frame with non-overlapping digit glyphs.
    SparseGlyphs { glyphs: usize, mnist: Option<PathBuf> },
    /// Moving Gaussian blobs over a static seeded texture of amplitude `texture`.
    MovingBlobs { layout: BlobLayout, texture: f64 },
    /// Lexicographically sorted `*.pgm` files.
    FrameDirectory { path: PathBuf },
    /// Planar 8-bit frames of `width * height` bytes each.
    RawFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub kind: StreamKind,
    pub width: usize,
    pub height: usize,
    pub total_frames: usize,
    pub seed: u64,
}

impl StreamSpec {
    pub fn sparse_glyphs(width: usize, height: usize, glyphs: usize, total_frames: usize, seed: u64) -> Self {
        Self {
            kind: StreamKind::SparseGlyphs { glyphs, mnist: None },
            width,
            height,
            total_frames,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_frames == 0 {
            return Err(Error::Config("stream.total_frames must be >= 1".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("stream dimensions must be >= 1".into()));
        }
        if let StreamKind::MovingBlobs { layout, texture } = &self.kind {
            if !(0.0..=1.0).contains(texture) {
                return Err(Error::Config("stream.texture must lie in [0,1]".into()));
            }
            let bad_sigma = match layout {
                BlobLayout::Random { sigma, speed, .. } => *sigma <= 0.0 || !speed.is_finite(),
                BlobLayout::Explicit(b) => b.iter().any(|b| b.sigma <= 0.0),
            };
            if bad_sigma {
                return Err(Error::Config("blob sigma must be > 0".into()));
            }
        }
        Ok(())
    }
}

const PLACEMENT_ATTEMPTS: usize = 1000;

/// Seeded rejection sampling of non-overlapping square tiles.
fn place_tiles<R: Rng>(w: usize, h: usize, edges: &[usize], rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let mut boxes: Vec<(usize, usize, usize)> = Vec::with_capacity(edges.len());
    for (g, &e) in edges.iter().enumerate() {
        if e > w || e > h {
            return Err(Error::Placement { glyph: g, attempts: 0 });
        }
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x = rng.gen_range(0..=w - e);
            let y = rng.gen_range(0..=h - e);
            let clear = boxes
                .iter()
                .all(|&(bx, by, be)| x + e <= bx || bx + be <= x || y + e <= by || by + be <= y);
            if clear {
                placed = Some((x, y));
                break;
            }
        }
        let (x, y) = placed.ok_or(Error::Placement { glyph: g, attempts: PLACEMENT_ATTEMPTS })?;
        boxes.push((x, y, e));
    }
    Ok(boxes.into_iter().map(|(x, y, _)| (x, y)).collect())
}

/// Static scene of `glyphs` non-overlapping tiles on a zero background.
pub fn gen_sparse_glyphs(spec: &StreamSpec) -> Result<Frame> {
    let StreamKind::SparseGlyphs { glyphs, mnist } = &spec.kind else {
        return Err(Error::Config("gen_sparse_glyphs needs a sparse-glyphs spec".into()));
    };
    let (w, h) = (spec.width, spec.height);
    let mut rng = stream_rng(spec.seed, "stream/glyphs");
    let pool = match mnist {
        Some(path) => {
            let images = load_idx_images(path)?;
            if images.is_empty() {
                return Err(Error::Idx("no images in file".into()));
            }
            Some(images)
        }
        None => None,
    };
    let tiles: Vec<Glyph> = (0..*glyphs)
        .map(|g| match &pool {
            Some(images) => images[rng.gen_range(0..images.len())].clone(),
            None => procedural_glyph((g % 10) as u8, &mut rng),
        })
        .collect();
    let edges: Vec<usize> = tiles.iter().map(|t| t.edge).collect();
    let origins = place_tiles(w, h, &edges, &mut rng)?;
    let mut pixels = vec![0.0; w * h];
    for (glyph, (x0, y0)) in tiles.iter().zip(origins) {
        let e = glyph.edge;
        for gy in 0..e {
            for gx in 0..e {
                pixels[(y0 + gy) * w + x0 + gx] = quantize(glyph.pixels[gy * e + gx]);
            }
        }
    }
    Frame::new(w, h, 0, pixels)
}

fn reflect(p: f64, extent: usize) -> f64 {
    let span = (extent.max(1) - 1) as f64;
    if span == 0.0 {
        return 0.0;
    }
    let m = p.rem_euclid(2.0 * span);
    if m > span {
        2.0 * span - m
    } else {
        m
    }
}

/// Renderer for the moving-blobs stream; frame `t` is a pure function of `t`.
#[derive(Debug, Clone)]
pub struct BlobScene {
    width: usize,
    height: usize,
    blobs: Vec<Blob>,
    background: Vec<f64>,
}

impl BlobScene {
    pub fn new(spec: &StreamSpec) -> Result<Self> {
        let StreamKind::MovingBlobs { layout, texture } = &spec.kind else {
            return Err(Error::Config("BlobScene needs a moving-blobs spec".into()));
        };
        let (w, h) = (spec.width, spec.height);
        let mut rng = stream_rng(spec.seed, "stream/blobs");
        let blobs = match layout {
            BlobLayout::Explicit(b) => b.clone(),
            BlobLayout::Random { count, speed, sigma } => (0..*count)
                .map(|_| {
                    let heading = rng.gen_range(0.0..std::f64::consts::TAU);
                    Blob {
                        x: rng.gen_range(0.0..w as f64),
                        y: rng.gen_range(0.0..h as f64),
                        vx: speed * heading.cos(),
                        vy: speed * heading.sin(),
                        sigma: *sigma,
                        amplitude: rng.gen_range(0.6..1.0),
                    }
                })
                .collect(),
        };
        // Coarse random lattice, bilinearly interpolated.
        let mut trng = stream_rng(spec.seed, "stream/texture");
        let cell = 16usize;
        let (gw, gh) = (w / cell + 2, h / cell + 2);
        let lattice: Vec<f64> = (0..gw * gh).map(|_| trng.gen::<f64>()).collect();
        let mut background = vec![0.0; w * h];
        for y in 0..h {
            let fy = y as f64 / cell as f64;
            let (iy, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..w {
                let fx = x as f64 / cell as f64;
                let (ix, tx) = (fx.floor() as usize, fx.fract());
                let l = |i: usize, j: usize| lattice[j * gw + i];
                let v = (1.0 - ty) * ((1.0 - tx) * l(ix, iy) + tx * l(ix + 1, iy))
                    + ty * ((1.0 - tx) * l(ix, iy + 1) + tx * l(ix + 1, iy + 1));
                background[y * w + x] = texture * v;
            }
        }
        Ok(Self { width: w, height: h, blobs, background })
    }

    /// Blob centers at time `t` (frames).
    pub fn centers(&self, t: usize) -> Vec<(f64, f64)> {
        self.blobs
            .iter()
            .map(|b| {
                (
                    reflect(b.x + b.vx * t as f64, self.width),
                    reflect(b.y + b.vy * t as f64, self.height),
                )
            })
            .collect()
    }

    pub fn render(&self, t: usize) -> Frame {
        let mut pixels = self.background.clone();
        for (b, (cx, cy)) in self.blobs.iter().zip(self.centers(t)) {
            let r = (4.0 * b.sigma).ceil() as isize;
            let (x0, y0) = (cx.round() as isize, cy.round() as isize);
            let inv = 1.0 / (2.0 * b.sigma * b.sigma);
            for y in (y0 - r).max(0)..=(y0 + r).min(self.height as isize - 1) {
                for x in (x0 - r).max(0)..=(x0 + r).min(self.width as isize - 1) {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    pixels[y as usize * self.width + x as usize] += b.amplitude * (-d2 * inv).exp();
                }
            }
        }
        for p in &mut pixels {
            *p = quantize(*p);
        }
        Frame { width: self.width, height: self.height, index: t, pixels }
    }
}

/// Moving-blobs frames `0..total_frames`.
pub fn gen_moving_blobs(spec: &StreamSpec) -> Result<Vec<Frame>> {
    spec.validate()?;
    let scene = BlobScene::new(spec)?;
    Ok((0..spec.total_frames).map(|t| scene.render(t)).collect())
}

#[derive(Debug)]
enum Source {
    Static(Frame),
    Blobs(BlobScene),
    Directory(Vec<PathBuf>),
    Raw { path: PathBuf, frames: usize },
}

/// Random-access frame stream of exactly `total_frames` frames; shorter
/// sources repeat from the start.
#[derive(Debug)]
pub struct FrameStream {
    spec: StreamSpec,
    source: Source,
}

fn io_err(frame: usize, path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::FrameIo { frame, path: Some(path.to_path_buf()), source }
}

/// Open the source described by `spec`.
pub fn open_stream(spec: &StreamSpec) -> Result<FrameStream> {
    spec.validate()?;
    let source = match &spec.kind {
        StreamKind::SparseGlyphs { .. } => Source::Static(gen_sparse_glyphs(spec)?),
        StreamKind::MovingBlobs { .. } => Source::Blobs(BlobScene::new(spec)?),
        StreamKind::FrameDirectory { path } => {
            let mut files = Vec::new();
            for entry in std::fs::read_dir(path).map_err(io_err(0, path))? {
                let p = entry.map_err(io_err(0, path))?.path();
                let is_pgm = p
                    .extension()
                    .map(|e| e.eq_ignore_ascii_case("pgm"))
                    .unwrap_or(false);
                if is_pgm && p.is_file() {
                    files.push(p);
                }
            }
            if files.is_empty() {
                return Err(Error::FrameIo {
                    frame: 0,
                    path: Some(path.clone()),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "no PGM frames in directory"),
                });
            }
            files.sort_by(|a, b| a.as_os_str().as_encoded_bytes().cmp(b.as_os_str().as_encoded_bytes()));
            Source::Directory(files)
        }
        StreamKind::RawFile { path } => {
            let len = std::fs::metadata(path).map_err(io_err(0, path))?.len() as usize;
            let per = spec.width * spec.height;
            if len == 0 || len % per != 0 {
                return Err(Error::Source(format!(
                    "{}: {len} bytes is not a positive multiple of {}x{} frames",
                    path.display(),
                    spec.width,
                    spec.height
                )));
            }
            Source::Raw { path: path.clone(), frames: len / per }
        }
    };
    Ok(FrameStream { spec: spec.clone(), source })
}

impl FrameStream {
    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.total_frames
    }

    pub fn is_empty(&self) -> bool {
        self.spec.total_frames == 0
    }

    /// Distinct frames in the underlying source before repetition.
    pub fn source_len(&self) -> usize {
        match &self.source {
            Source::Static(_) => 1,
            Source::Blobs(_) => self.spec.total_frames,
            Source::Directory(files) => files.len(),
            Source::Raw { frames, .. } => *frames,
        }
    }

    pub fn frame(&self, index: usize) -> Result<Frame> {
        if index >= self.spec.total_frames {
            return Err(Error::Source(format!(
                "frame {index} beyond stream length {}",
                self.spec.total_frames
            )));
        }
        let (w, h) = (self.spec.width, self.spec.height);
        let frame = match &self.source {
            Source::Static(f) => f.clone().with_index(index),
            Source::Blobs(scene) => scene.render(index),
            Source::Directory(files) => {
                let path = &files[index % files.len()];
                let bytes = std::fs::read(path).map_err(io_err(index, path))?;
                let f = read_pgm(&bytes).map_err(|e| Error::Source(format!(
                    "frame {index} ({}): {e}",
                    path.display()
                )))?;
                if f.width() != w || f.height() != h {
                    return Err(Error::Source(format!(
                        "frame {index} ({}) is {}x{}, expected {w}x{h}",
                        path.display(),
                        f.width(),
                        f.height()
                    )));
                }
                f.with_index(index)
            }
            Source::Raw { path, frames } => {
                let per = w * h;
                let mut file = File::open(path).map_err(io_err(index, path))?;
                file.seek(SeekFrom::Start(((index % frames) * per) as u64))
                    .map_err(io_err(index, path))?;
                let mut buf = vec![0u8; per];
                file.read_exact(&mut buf).map_err(io_err(index, path))?;
                Frame::from_u8(w, h, index, &buf)?
            }
        };
        debug_assert!(frame.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        Ok(frame)
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.spec.total_frames).map(move |i| self.frame(i))
    }
}

/// Write frames as `frame_NNNNNN.pgm` into `dir`; returns the number written.
pub fn write_frame_directory(stream: &FrameStream, dir: &Path) -> Result<usize> {
    std::fs::create_dir_all(dir)?;
    let mut n = 0;
    for frame in stream.iter() {
        let frame = frame?;
        let path = dir.join(format!("frame_{:06}.pgm", frame.index()));
        std::fs::write(&path, write_pgm(&frame)).map_err(io_err(frame.index(), &path))?;
        n += 1;
    }
    Ok(n)
}
