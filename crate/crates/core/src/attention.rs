//! Gravitational focus of attention and the spatial densities built on it.
//!
//! The gaze `a(t)` obeys `ä + ρ ȧ = E(t, a)`, where `E` is the planar
//! gravitational field (softened `1/r` kernel) generated by a mass map
//! mixing brightness-gradient magnitude and frame-difference motion.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::stream::Frame;

/// Non-negative per-pixel masses, normalized to unit total unless all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl MassMap {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// `w_detail |∇u| + w_motion |u(t) − u(t−1)|`, normalized to unit total.
///
/// The gradient uses central differences with replicated borders.
pub fn compute_mass_map(frame: &Frame, prev: Option<&Frame>, w_detail: f64, w_motion: f64) -> Result<MassMap> {
    if let Some(p) = prev {
        if !p.same_dims(frame) {
            return Err(Error::Dimension(format!(
                "previous frame {}x{} vs current {}x{}",
                p.width(),
                p.height(),
                frame.width(),
                frame.height()
            )));
        }
    }
    let (w, h) = (frame.width(), frame.height());
    let u = frame.pixels();
    let mut values = vec![0.0; w * h];
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = 0.5 * (u[y * w + xp] - u[y * w + xm]);
            let gy = 0.5 * (u[yp * w + x] - u[ym * w + x]);
            let mut m = w_detail * (gx * gx + gy * gy).sqrt();
            if let Some(p) = prev {
                m += w_motion * (u[y * w + x] - p.pixels()[y * w + x]).abs();
            }
            values[y * w + x] = m;
        }
    }
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        for v in &mut values {
            *v /= total;
        }
    }
    Ok(MassMap { width: w, height: h, values })
}

/// `E(a) = Σ_x m(x) (x − a) / (|x − a|² + ε²)` with pixel coordinates `x = (column, row)`.
pub fn gravitational_field(mass: &MassMap, a: [f64; 2], softening: f64) -> [f64; 2] {
    let eps2 = softening * softening;
    let (mut ex, mut ey) = (0.0, 0.0);
    for y in 0..mass.height {
        let dy = y as f64 - a[1];
        let row = &mass.values[y * mass.width..(y + 1) * mass.width];
        for (x, &m) in row.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let dx = x as f64 - a[0];
            let s = m / (dx * dx + dy * dy + eps2);
            ex += s * dx;
            ey += s * dy;
        }
    }
    [ex, ey]
}

/// Parameters of the attention law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeParams {
    /// Dissipation ρ > 0.
    pub rho: f64,
    pub w_detail: f64,
    pub w_motion: f64,
    /// Integration step in frame-time units; each frame spans `round(1/dt_gaze)` steps.
    pub dt_gaze: f64,
    /// Kernel softening ε_r in pixels.
    pub softening: f64,
    /// Scale applied to the unit-mass field before integration.
    pub field_gain: f64,
}

impl Default for GazeParams {
    fn default() -> Self {
        Self { rho: 0.3, w_detail: 0.1, w_motion: 1.0, dt_gaze: 0.1, softening: 1.0, field_gain: 200.0 }
    }
}

impl GazeParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.rho > 0.0, "foa.rho must be > 0"),
            (self.dt_gaze > 0.0, "foa.dt_gaze must be > 0"),
            (self.softening > 0.0, "foa.softening must be > 0"),
            (self.w_detail >= 0.0 && self.w_motion >= 0.0, "foa mass weights must be >= 0"),
            (self.field_gain >= 0.0 && self.field_gain.is_finite(), "foa.field_gain must be finite and >= 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }

    pub fn steps_per_frame(&self) -> usize {
        (1.0 / self.dt_gaze).round().max(1.0) as usize
    }
}

/// Gaze position `a` and velocity `v` in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeState {
    pub a: [f64; 2],
    pub v: [f64; 2],
}

impl GazeState {
    /// At rest in the middle of a `width × height` retina.
    pub fn centered(width: usize, height: usize) -> Self {
        Self { a: [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0], v: [0.0, 0.0] }
    }

    pub fn speed(&self) -> f64 {
        self.v[0].hypot(self.v[1])
    }

    /// Nearest pixel to the gaze.
    pub fn pixel(&self, width: usize, height: usize) -> (usize, usize) {
        let x = self.a[0].round().clamp(0.0, (width - 1) as f64) as usize;
        let y = self.a[1].round().clamp(0.0, (height - 1) as f64) as usize;
        (x, y)
    }
}

/// One semi-implicit Euler step: `v += dt (E − ρ v)`, then `a += dt v`,
/// clamped to the retina with the normal velocity zeroed on contact.
pub fn step_gaze(state: GazeState, field: [f64; 2], rho: f64, dt: f64, width: usize, height: usize) -> GazeState {
    let bounds = [(width - 1) as f64, (height - 1) as f64];
    let mut next = state;
    for i in 0..2 {
        next.v[i] = state.v[i] + dt * (field[i] - rho * state.v[i]);
        next.a[i] = state.a[i] + dt * next.v[i];
        if next.a[i] < 0.0 {
            next.a[i] = 0.0;
            next.v[i] = 0.0;
        } else if next.a[i] > bounds[i] {
            next.a[i] = bounds[i];
            next.v[i] = 0.0;
        }
    }
    next
}

/// Drives the gaze across a frame sequence, one frame at a time.
#[derive(Debug, Clone)]
pub struct FoaTracker {
    pub params: GazeParams,
    pub state: GazeState,
    prev: Option<Frame>,
}

impl FoaTracker {
    pub fn new(params: GazeParams, width: usize, height: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, state: GazeState::centered(width, height), prev: None })
    }

    /// Restore a tracker mid-stream (checkpoint resume).
    pub fn resume(params: GazeParams, state: GazeState, prev: Option<Frame>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, state, prev })
    }

    pub fn previous_frame(&self) -> Option<&Frame> {
        self.prev.as_ref()
    }

    /// Integrate the attention law over one frame interval and return the new state.
    pub fn advance(&mut self, frame: &Frame) -> Result<GazeState> {
        let p = self.params;
        let mass = compute_mass_map(frame, self.prev.as_ref(), p.w_detail, p.w_motion)?;
        let dt = 1.0 / p.steps_per_frame() as f64;
        for _ in 0..p.steps_per_frame() {
            let e = gravitational_field(&mass, self.state.a, p.softening);
            let e = [p.field_gain * e[0], p.field_gain * e[1]];
            self.state = step_gaze(self.state, e, p.rho, dt, frame.width(), frame.height());
        }
        if !(self.state.a.iter().chain(self.state.v.iter()).all(|v| v.is_finite())) {
            return Err(Error::Integration { frame: frame.index(), what: "gaze" });
        }
        self.prev = Some(frame.clone());
        Ok(self.state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DensityKind {
    #[serde(rename = "UNI")]
    Uni,
    #[serde(rename = "FOA")]
    Foa,
    #[serde(rename = "FOAW")]
    Foaw,
    #[serde(rename = "RND")]
    Rnd,
}

impl DensityKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Uni => "UNI",
            Self::Foa => "FOA",
            Self::Foaw => "FOAW",
            Self::Rnd => "RND",
        }
    }

    pub fn needs_gaze(self) -> bool {
        matches!(self, Self::Foa | Self::Foaw)
    }
}

impl std::str::FromStr for DensityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UNI" => Ok(Self::Uni),
            "FOA" => Ok(Self::Foa),
            "FOAW" => Ok(Self::Foaw),
            "RND" => Ok(Self::Rnd),
            _ => Err(Error::Config(format!("unknown density '{s}'"))),
        }
    }
}

impl std::fmt::Display for DensityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub kind: DensityKind,
    /// FOAW window edge as a fraction of `min(width, height)`.
    pub window_fraction: f64,
    pub seed: u64,
}

impl DensitySpec {
    pub fn new(kind: DensityKind) -> Self {
        Self { kind, window_fraction: 0.15, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == DensityKind::Foaw && !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(Error::Config("density.window_fraction must be in (0,1]".into()));
        }
        Ok(())
    }

    pub fn window_edge(&self, width: usize, height: usize) -> usize {
        ((self.window_fraction * width.min(height) as f64).round() as usize).max(1)
    }
}

/// Axis-aligned pixel rectangle `[x0, x0+w) × [y0, y0+h)`; may extend past the retina.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: isize,
    pub y0: isize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x0: isize, y0: isize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn point(x: usize, y: usize) -> Self {
        Self::new(x as isize, y as isize, 1, 1)
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: isize, y: isize) -> bool {
        x >= self.x0 && y >= self.y0 && x < self.x0 + self.w as isize && y < self.y0 + self.h as isize
    }

    pub fn dilate(&self, r: usize) -> Self {
        Self::new(self.x0 - r as isize, self.y0 - r as isize, self.w + 2 * r, self.h + 2 * r)
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = (self.x0 + self.w as isize).min(other.x0 + other.w as isize);
        let y1 = (self.y0 + self.h as isize).min(other.y0 + other.h as isize);
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, (x1 - x0) as usize, (y1 - y0) as usize))
    }
}

/// Discrete spatial density over one frame: pixel coordinates with weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySupport {
    pub width: usize,
    pub height: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl DensitySupport {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest rectangle holding every support pixel.
    pub fn bounds(&self) -> Rect {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y, _) in &self.entries {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Rect::new(x0 as isize, y0 as isize, x1 + 1 - x0, y1 + 1 - y0)
    }

    fn uniform(width: usize, height: usize, rect: Rect) -> Self {
        let weight = 1.0 / rect.area() as f64;
        let mut entries = Vec::with_capacity(rect.area());
        for y in 0..rect.h {
            for x in 0..rect.w {
                entries.push(((rect.x0 as usize) + x, (rect.y0 as usize) + y, weight));
            }
        }
        Self { width, height, entries }
    }
}

/// Pixel picked by the RND density at `frame`; a pure function of `(seed, frame)`.
pub fn random_pixel(seed: u64, frame: usize, width: usize, height: usize) -> (usize, usize) {
    let h = derive_seed(seed, &format!("rnd/{frame}"));
    let i = (h % (width * height) as u64) as usize;
    (i % width, i / width)
}

/// Materialize the density for one frame.
pub fn density_support(
    spec: &DensitySpec,
    gaze: Option<&GazeState>,
    width: usize,
    height: usize,
    frame: usize,
) -> Result<DensitySupport> {
    spec.validate()?;
    let retina = Rect::full(width, height);
    let gaze_pixel = || {
        gaze.map(|g| g.pixel(width, height))
            .ok_or(Error::MissingGaze(spec.kind.name()))
    };
    Ok(match spec.kind {
        DensityKind::Uni => DensitySupport::uniform(width, height, retina),
        DensityKind::Foa => {
            let (x, y) = gaze_pixel()?;
            DensitySupport { width, height, entries: vec![(x, y, 1.0)] }
        }
        DensityKind::Foaw => {
            let (x, y) = gaze_pixel()?;
            let edge = spec.window_edge(width, height);
            let half = (edge / 2) as isize;
            let window = Rect::new(x as isize - half, y as isize - half, edge, edge);
            let clipped = window.intersect(&retina).expect("window contains the gaze pixel");
            DensitySupport::uniform(width, height, clipped)
        }
        DensityKind::Rnd => {
            let (x, y) = random_pixel(spec.seed, frame, width, height);
            DensitySupport { width, height, entries: vec![(x, y, 1.0)] }
        }
    })
}

/// One scanpath sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanpathSample {
    pub frame: usize,
    pub state: GazeState,
}

/// CSV with header `frame,x,y,vx,vy`, six decimals.
pub fn scanpath_csv(samples: &[ScanpathSample]) -> String {
    let mut out = String::from("frame,x,y,vx,vy\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            s.frame, s.state.a[0], s.state.a[1], s.state.v[0], s.state.v[1]
        );
    }
    out
}
