//! `key = value` experiment configuration with dotted section keys.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use calfoa_core::attention::{DensityKind, DensitySpec, GazeParams};
use calfoa_core::dynamics::DynamicsParams;
use calfoa_core::network::Architecture;
use calfoa_core::objective::{Criterion, EntropyParams};
use calfoa_core::rng::derive_seed;
use calfoa_core::stream::{BlobLayout, StreamKind};
use calfoa_core::StreamSpec;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamSource {
    SparseGlyphs,
    MovingBlobs,
    FrameDirectory,
    RawFile,
}

impl StreamSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::SparseGlyphs => "sparse-glyphs",
            Self::MovingBlobs => "moving-blobs",
            Self::FrameDirectory => "frame-directory",
            Self::RawFile => "raw-file",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::SparseGlyphs, Self::MovingBlobs, Self::FrameDirectory, Self::RawFile]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub source: StreamSource,
    pub width: usize,
    pub height: usize,
    /// Defaults to a value derived from the master seed.
    pub seed: Option<u64>,
    pub glyphs: usize,
    pub mnist: Option<PathBuf>,
    pub blobs: usize,
    pub blob_speed: f64,
    pub blob_sigma: f64,
    pub texture: f64,
    pub path: Option<PathBuf>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            source: StreamSource::SparseGlyphs,
            width: 280,
            height: 280,
            seed: None,
            glyphs: 10,
            mnist: None,
            blobs: 3,
            blob_speed: 1.0,
            blob_sigma: 6.0,
            texture: 0.2,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub stream: StreamConfig,
    pub arch: String,
    pub train_density: DensityKind,
    pub criterion: Criterion,
    pub train_frames: usize,
    pub test_frames: usize,
    pub dynamics: DynamicsParams,
    pub objective: EntropyParams,
    pub gaze: GazeParams,
    pub window_fraction: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Frames between intermediate checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Frames between running-MI log rows; 0 disables the log.
    pub mi_log_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            stream: StreamConfig::default(),
            arch: "S".into(),
            train_density: DensityKind::Foa,
            criterion: Criterion::Avg,
            train_frames: 2000,
            test_frames: 500,
            dynamics: DynamicsParams::default(),
            objective: EntropyParams::default(),
            gaze: GazeParams::default(),
            window_fraction: 0.15,
            seed: 1,
            output_dir: PathBuf::from("runs/experiment"),
            checkpoint_every: 0,
            mi_log_every: 100,
        }
    }
}

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "CALFOA_OUTPUT_ROOT";

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("'{v}' is not a valid value for {key}"))
}

fn parse_opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| CliError::Config { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key = value, got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(bad(format!("duplicate key '{k}'")));
            }
            cfg.set(k, v).map_err(bad)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assign one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let s = &mut self.stream;
        match key {
            "name" => self.name = v.to_string(),
            "seed" => self.seed = parse_num(key, v)?,
            "stream.kind" => s.source = StreamSource::parse(v).ok_or_else(|| format!("unknown stream kind '{v}'"))?,
            "stream.width" => s.width = parse_num(key, v)?,
            "stream.height" => s.height = parse_num(key, v)?,
            "stream.seed" => s.seed = Some(parse_num(key, v)?),
            "stream.glyphs" => s.glyphs = parse_num(key, v)?,
            "stream.mnist" => s.mnist = parse_opt_path(v),
            "stream.blobs" => s.blobs = parse_num(key, v)?,
            "stream.blob_speed" => s.blob_speed = parse_num(key, v)?,
            "stream.blob_sigma" => s.blob_sigma = parse_num(key, v)?,
            "stream.texture" => s.texture = parse_num(key, v)?,
            "stream.path" => s.path = parse_opt_path(v),
            "network.arch" => self.arch = v.to_string(),
            "train.density" => self.train_density = v.parse().map_err(|e| format!("{e}"))?,
            "train.criterion" => self.criterion = v.parse().map_err(|e| format!("{e}"))?,
            "train.frames" => self.train_frames = parse_num(key, v)?,
            "test.frames" => self.test_frames = parse_num(key, v)?,
            "dynamics.alpha" => self.dynamics.alpha = parse_num(key, v)?,
            "dynamics.beta" => self.dynamics.beta = parse_num(key, v)?,
            "dynamics.k" => self.dynamics.k = parse_num(key, v)?,
            "dynamics.dt" => self.dynamics.dt = parse_num(key, v)?,
            "objective.lambda_c" => self.objective.lambda_c = parse_num(key, v)?,
            "objective.lambda_e" => self.objective.lambda_e = parse_num(key, v)?,
            "objective.lambda_s" => self.objective.lambda_s = parse_num(key, v)?,
            "objective.zeta_s" => self.objective.zeta_s = parse_num(key, v)?,
            "objective.dt_s" => self.objective.dt_s = parse_num(key, v)?,
            "foa.rho" => self.gaze.rho = parse_num(key, v)?,
            "foa.w_detail" => self.gaze.w_detail = parse_num(key, v)?,
            "foa.w_motion" => self.gaze.w_motion = parse_num(key, v)?,
            "foa.dt_gaze" => self.gaze.dt_gaze = parse_num(key, v)?,
            "foa.softening" => self.gaze.softening = parse_num(key, v)?,
            "foa.field_gain" => self.gaze.field_gain = parse_num(key, v)?,
            "foa.window_fraction" => self.window_fraction = parse_num(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "output.checkpoint_every" => self.checkpoint_every = parse_num(key, v)?,
            "output.mi_log_every" => self.mi_log_every = parse_num(key, v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture()?;
        self.dynamics.validate()?;
        self.objective.validate()?;
        self.gaze.validate()?;
        self.density(self.train_density).validate()?;
        self.stream_spec()?.validate()?;
        if matches!(self.stream.source, StreamSource::FrameDirectory | StreamSource::RawFile) && self.stream.path.is_none() {
            return Err(CliError::Invalid(format!("stream.kind = {} needs stream.path", self.stream.source.name())));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Ok(self.arch.parse()?)
    }

    pub fn stream_seed(&self) -> u64 {
        self.stream.seed.unwrap_or_else(|| derive_seed(self.seed, "stream"))
    }

    /// Stream covering the training segment followed by the test segment.
    pub fn stream_spec(&self) -> Result<StreamSpec> {
        let s = &self.stream;
        let kind = match s.source {
            StreamSource::SparseGlyphs => StreamKind::SparseGlyphs { glyphs: s.glyphs, mnist: s.mnist.clone() },
            StreamSource::MovingBlobs => StreamKind::MovingBlobs {
                layout: BlobLayout::Random { count: s.blobs, speed: s.blob_speed, sigma: s.blob_sigma },
                texture: s.texture,
            },
            StreamSource::FrameDirectory => StreamKind::FrameDirectory { path: s.path.clone().unwrap_or_default() },
            StreamSource::RawFile => StreamKind::RawFile { path: s.path.clone().unwrap_or_default() },
        };
        Ok(StreamSpec {
            kind,
            width: s.width,
            height: s.height,
            total_frames: (self.train_frames + self.test_frames).max(1),
            seed: self.stream_seed(),
        })
    }

    pub fn density(&self, kind: DensityKind) -> DensitySpec {
        DensitySpec { kind, window_fraction: self.window_fraction, seed: derive_seed(self.seed, "density/rnd") }
    }

    pub fn network_seed(&self) -> u64 {
        derive_seed(self.seed, "network")
    }

    /// Every key with its effective value, one per line, in a fixed order.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.stream;
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        vec![
            ("name", self.name.clone()),
            ("seed", self.seed.to_string()),
            ("stream.kind", s.source.name().into()),
            ("stream.width", s.width.to_string()),
            ("stream.height", s.height.to_string()),
            ("stream.seed", self.stream_seed().to_string()),
            ("stream.glyphs", s.glyphs.to_string()),
            ("stream.mnist", opt(&s.mnist)),
            ("stream.blobs", s.blobs.to_string()),
            ("stream.blob_speed", s.blob_speed.to_string()),
            ("stream.blob_sigma", s.blob_sigma.to_string()),
            ("stream.texture", s.texture.to_string()),
            ("stream.path", opt(&s.path)),
            ("network.arch", self.arch.clone()),
            ("train.density", self.train_density.to_string()),
            ("train.criterion", self.criterion.to_string()),
            ("train.frames", self.train_frames.to_string()),
            ("test.frames", self.test_frames.to_string()),
            ("dynamics.alpha", self.dynamics.alpha.to_string()),
            ("dynamics.beta", self.dynamics.beta.to_string()),
            ("dynamics.k", self.dynamics.k.to_string()),
            ("dynamics.dt", self.dynamics.dt.to_string()),
            ("objective.lambda_c", self.objective.lambda_c.to_string()),
            ("objective.lambda_e", self.objective.lambda_e.to_string()),
            ("objective.lambda_s", self.objective.lambda_s.to_string()),
            ("objective.zeta_s", self.objective.zeta_s.to_string()),
            ("objective.dt_s", self.objective.dt_s.to_string()),
            ("foa.rho", self.gaze.rho.to_string()),
            ("foa.w_detail", self.gaze.w_detail.to_string()),
            ("foa.w_motion", self.gaze.w_motion.to_string()),
            ("foa.dt_gaze", self.gaze.dt_gaze.to_string()),
            ("foa.softening", self.gaze.softening.to_string()),
            ("foa.field_gain", self.gaze.field_gain.to_string()),
            ("foa.window_fraction", self.window_fraction.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
            ("output.checkpoint_every", self.checkpoint_every.to_string()),
            ("output.mi_log_every", self.mi_log_every.to_string()),
        ]
    }

    /// SHA-256 over the keys that shape the learning trajectory.
    ///
    /// Segment lengths and output settings are excluded so a run can be
    /// extended from a checkpoint.
    pub fn trajectory_hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k.starts_with("output.") || k == "train.frames" || k == "test.frames" || k == "name" {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Output directory, re-rooted under `CALFOA_OUTPUT_ROOT` when that is set
    /// and the configured path is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}
