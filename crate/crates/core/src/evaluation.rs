//! Segment-level mutual-information index with frozen weights, and
//! scanpath artifacts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attention::{density_support, DensityKind, DensitySpec, FoaTracker, GazeParams, GazeState, Rect, ScanpathSample};
use crate::error::{Error, Result};
use crate::network::{forward, ForwardCache, OutputView, ParamVector};
use crate::objective::{avg_activation, conditional_entropy, output_entropy, Criterion};
use crate::stream::{encode_pgm, Frame, FrameStream};

/// Slack allowed on `0 ≤ mi ≤ 1` and `h_out ≥ h_cond`.
pub const MI_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub t1: usize,
    pub t2: usize,
    pub density: DensityKind,
    pub h_cond: f64,
    pub h_out: f64,
    pub mi: f64,
    pub frames_evaluated: usize,
}

/// Running sums for `H(Y|X)` and the segment-averaged activation.
#[derive(Debug, Clone)]
pub struct MiAccumulator {
    h_cond: f64,
    p: Vec<f64>,
    frames: usize,
}

impl MiAccumulator {
    pub fn new(m: usize) -> Self {
        Self { h_cond: 0.0, p: vec![0.0; m], frames: 0 }
    }

    /// Rebuild from `(Σ h_cond, Σ P̄, frames)`.
    pub fn from_parts(h_cond: f64, p: Vec<f64>, frames: usize) -> Self {
        Self { h_cond, p, frames }
    }

    pub fn parts(&self) -> (f64, &[f64], usize) {
        (self.h_cond, &self.p, self.frames)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn add(&mut self, outputs: &OutputView<'_>, support: &crate::attention::DensitySupport) -> Result<()> {
        self.h_cond += conditional_entropy(outputs, support)?;
        for (a, b) in self.p.iter_mut().zip(avg_activation(outputs, support)?) {
            *a += b;
        }
        self.frames += 1;
        Ok(())
    }

    /// Add a frame already reduced to its conditional entropy and `P̄`.
    pub fn add_values(&mut self, h_cond: f64, pbar: &[f64]) {
        self.h_cond += h_cond;
        for (a, b) in self.p.iter_mut().zip(pbar) {
            *a += b;
        }
        self.frames += 1;
    }

    /// `(h_cond, h_out, mi)` with uniform per-frame weight.
    pub fn values(&self) -> Result<(f64, f64, f64)> {
        if self.frames == 0 {
            return Err(Error::Dimension("MI over an empty segment".into()));
        }
        let n = self.frames as f64;
        let h_cond = self.h_cond / n;
        let p: Vec<f64> = self.p.iter().map(|v| v / n).collect();
        let h_out = output_entropy(&p);
        let mi = h_out - h_cond;
        if !mi.is_finite() {
            return Err(Error::Numerical { term: "mutual information" });
        }
        if mi < -MI_TOLERANCE || mi > 1.0 + MI_TOLERANCE {
            return Err(Error::Numerical { term: "mutual information outside [0,1]" });
        }
        Ok((h_cond, h_out, mi))
    }
}

/// Gaze states after each frame of `[t1, t2)`, starting centered and at rest.
pub fn gaze_replay(stream: &FrameStream, t1: usize, t2: usize, params: GazeParams) -> Result<Vec<GazeState>> {
    let spec = stream.spec();
    let mut tracker = FoaTracker::new(params, spec.width, spec.height)?;
    (t1..t2).map(|i| tracker.advance(&stream.frame(i)?)).collect()
}

/// Reuses the last forward pass while frame and region are unchanged.
struct ForwardMemo {
    frame: Option<Frame>,
    cache: Option<ForwardCache>,
}

impl ForwardMemo {
    fn get(&mut self, params: &ParamVector, frame: &Frame, region: Rect) -> Result<&ForwardCache> {
        let hit = matches!((&self.frame, &self.cache), (Some(f), Some(c))
            if c.region() == region && f.pixels() == frame.pixels() && f.same_dims(frame));
        if !hit {
            self.cache = Some(forward(params, frame, region)?);
            self.frame = Some(frame.clone());
        }
        Ok(self.cache.as_ref().expect("filled above"))
    }
}

fn check_segment(stream: &FrameStream, t1: usize, t2: usize) -> Result<()> {
    if t2 <= t1 || t2 > stream.len() {
        return Err(Error::Config(format!(
            "evaluation segment [{t1}, {t2}) is empty or beyond the stream ({} frames)",
            stream.len()
        )));
    }
    Ok(())
}

/// MI index over frames `[t1, t2)` under `density`, with frozen `params`.
///
/// `gaze[i]` is the gaze at frame `t1 + i`; required for FOA and FOAW.
pub fn evaluate_mi(
    params: &ParamVector,
    stream: &FrameStream,
    t1: usize,
    t2: usize,
    density: &DensitySpec,
    gaze: Option<&[GazeState]>,
) -> Result<MiReport> {
    check_segment(stream, t1, t2)?;
    if let Some(g) = gaze {
        if g.len() != t2 - t1 {
            return Err(Error::Dimension(format!("{} gaze states for {} frames", g.len(), t2 - t1)));
        }
    }
    let (w, h) = (stream.spec().width, stream.spec().height);
    let mut acc = MiAccumulator::new(params.arch.m());
    let mut memo = ForwardMemo { frame: None, cache: None };
    for t in t1..t2 {
        let frame = stream.frame(t)?;
        let g = gaze.map(|g| &g[t - t1]);
        let support = density_support(density, g, w, h, t)?;
        let cache = memo.get(params, &frame, support.bounds())?;
        acc.add(&cache.outputs(), &support)?;
    }
    let (h_cond, h_out, mi) = acc.values()?;
    Ok(MiReport { t1, t2, density: density.kind, h_cond, h_out, mi, frames_evaluated: acc.frames() })
}

/// UNI, FOA and FOAW rows sharing one gaze replay.
pub fn cross_density_table(
    params: &ParamVector,
    stream: &FrameStream,
    t1: usize,
    t2: usize,
    gaze_params: GazeParams,
    window_fraction: f64,
) -> Result<Vec<MiReport>> {
    density_table(params, stream, t1, t2, gaze_params, window_fraction, &TEST_DENSITIES)
}

/// Test densities of the full cross table, in report order.
pub const TEST_DENSITIES: [DensityKind; 3] = [DensityKind::Uni, DensityKind::Foa, DensityKind::Foaw];

/// Rows for the chosen test densities; the gaze is replayed only when one
/// of them follows it.
pub fn density_table(
    params: &ParamVector,
    stream: &FrameStream,
    t1: usize,
    t2: usize,
    gaze_params: GazeParams,
    window_fraction: f64,
    kinds: &[DensityKind],
) -> Result<Vec<MiReport>> {
    check_segment(stream, t1, t2)?;
    let gaze = if kinds.iter().any(|k| k.needs_gaze()) { Some(gaze_replay(stream, t1, t2, gaze_params)?) } else { None };
    kinds
        .iter()
        .map(|&kind| {
            let spec = DensitySpec { kind, window_fraction, seed: 0 };
            evaluate_mi(params, stream, t1, t2, &spec, gaze.as_deref())
        })
        .collect()
}

/// One row of the evaluation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub test_density: DensityKind,
    pub h_cond: f64,
    pub h_out: f64,
    pub mi: f64,
}

impl From<&MiReport> for ReportRow {
    fn from(r: &MiReport) -> Self {
        Self { test_density: r.density, h_cond: r.h_cond, h_out: r.h_out, mi: r.mi }
    }
}

/// Per-model evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stream: String,
    pub arch: String,
    pub train_density: DensityKind,
    pub criterion: Criterion,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn mi(&self, test: DensityKind) -> Option<f64> {
        self.rows.iter().find(|r| r.test_density == test).map(|r| r.mi)
    }
}

/// Fixation heatmap (PGM, counts scaled to `[0,255]`) and `x,y,speed` scatter CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FoaArtifacts {
    pub counts: Vec<u64>,
    pub grid: (usize, usize),
    pub heatmap_pgm: Vec<u8>,
    pub scatter_csv: String,
}

pub fn foa_artifacts(
    samples: &[ScanpathSample],
    width: usize,
    height: usize,
    grid: (usize, usize),
) -> Result<FoaArtifacts> {
    let (gw, gh) = grid;
    if samples.is_empty() {
        return Err(Error::Dimension("empty scanpath".into()));
    }
    if gw == 0 || gh == 0 || width == 0 || height == 0 {
        return Err(Error::Dimension("heatmap grid and frame must be nonempty".into()));
    }
    let mut counts = vec![0u64; gw * gh];
    let mut csv = String::from("x,y,speed\n");
    for s in samples {
        let [x, y] = s.state.a;
        let cx = ((x / width as f64 * gw as f64) as usize).min(gw - 1);
        let cy = ((y / height as f64 * gh as f64) as usize).min(gh - 1);
        counts[cy * gw + cx] += 1;
        let _ = writeln!(csv, "{x:.6},{y:.6},{:.6}", s.state.speed());
    }
    let max = *counts.iter().max().expect("nonempty grid") as f64;
    let pixels: Vec<u8> = counts.iter().map(|&c| (255.0 * c as f64 / max).round() as u8).collect();
    Ok(FoaArtifacts { heatmap_pgm: encode_pgm(gw, gh, &pixels), counts, grid, scatter_csv: csv })
}
