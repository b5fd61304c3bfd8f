//! Training, evaluation and artifact commands.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use calfoa_core::attention::{density_support, DensityKind, FoaTracker, ScanpathSample};
use calfoa_core::checkpoint::{Checkpoint, EntropySnapshot};
use calfoa_core::dynamics::{cal_step, DynamicsState};
use calfoa_core::evaluation::{density_table, foa_artifacts, EvalReport, MiAccumulator, ReportRow};
use calfoa_core::network::{init_params, ParamVector};
use calfoa_core::objective::{frame_potential_and_grad, EntropyState, FramePotential};
use calfoa_core::stream::{open_stream, write_frame_directory, FrameStream};
use calfoa_core::theory::{epsilon_sweep, toy_problems, SweepRow, SweepVerdict};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.cal2";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MI_LOG_FILE: &str = "mi_log.csv";
pub const REPORT_FILE: &str = "report.json";
const METRICS_HEADER: &str = "frame,U,h_cond,h_out,penalty";
const MI_LOG_HEADER: &str = "frame,h_cond,h_out,mi";

/// Sidecar written next to every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub arch: String,
    pub n: usize,
    pub criterion: String,
    pub train_density: String,
    pub config_hash: String,
    pub frame_index: u64,
}

fn sidecar_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("json")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Mutable state of one training run.
pub struct Trainer {
    pub cfg: ExperimentConfig,
    pub stream: FrameStream,
    pub dynamics: DynamicsState,
    pub entropy: EntropyState,
    pub tracker: Option<FoaTracker>,
    pub running_mi: MiAccumulator,
    pub next_frame: usize,
}

impl Trainer {
    pub fn fresh(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let arch = cfg.architecture()?;
        let stream = open_stream(&cfg.stream_spec()?)?;
        let w = init_params(&arch, cfg.network_seed())?;
        let tracker = cfg
            .train_density
            .needs_gaze()
            .then(|| FoaTracker::new(cfg.gaze, cfg.stream.width, cfg.stream.height))
            .transpose()?;
        Ok(Self {
            cfg: cfg.clone(),
            stream,
            dynamics: DynamicsState::new(w, cfg.dynamics)?,
            entropy: EntropyState::new(cfg.criterion, cfg.objective, arch.m())?,
            tracker,
            running_mi: MiAccumulator::new(arch.m()),
            next_frame: 0,
        })
    }

    pub fn resume(cfg: &ExperimentConfig, ckpt_path: &Path) -> Result<Self> {
        let mut t = Self::fresh(cfg)?;
        let side: Sidecar = {
            let p = sidecar_path(ckpt_path);
            let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            serde_json::from_str(&text)?
        };
        if side.config_hash != cfg.trajectory_hash() {
            return Err(CliError::Mismatch("checkpoint was produced under a different configuration".into()));
        }
        let bytes = fs::read(ckpt_path).map_err(|e| CliError::io(ckpt_path, e))?;
        let ck = Checkpoint::decode(&bytes)?;
        let arch = cfg.architecture()?;
        if ck.arch.descriptor() != arch.descriptor() || ck.entropy.criterion != cfg.criterion {
            return Err(CliError::Mismatch("architecture or criterion differs from the configuration".into()));
        }
        let next = ck.next_frame as usize;
        if next > cfg.train_frames {
            return Err(CliError::Mismatch(format!(
                "checkpoint is at frame {next}, beyond train.frames = {}",
                cfg.train_frames
            )));
        }
        let w = ParamVector::from_values(&arch, ck.w)?;
        t.dynamics = DynamicsState::with_velocity(w, ck.v, cfg.dynamics, next)?;
        t.entropy.nu = ck.entropy.nu;
        t.entropy.s = ck.entropy.s;
        t.entropy.s_prev = ck.entropy.s_prev;
        if let Some(tr) = &mut t.tracker {
            let gaze = ck.gaze.ok_or_else(|| CliError::Mismatch("checkpoint lacks gaze state".into()))?;
            *tr = FoaTracker::resume(cfg.gaze, gaze, ck.prev_frame)?;
        }
        t.running_mi = ck.running_mi;
        t.next_frame = next;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            arch: self.dynamics.w.arch.clone(),
            w: self.dynamics.w.values.clone(),
            v: self.dynamics.v.clone(),
            entropy: EntropySnapshot {
                criterion: self.entropy.criterion,
                nu: self.entropy.nu.clone(),
                s: self.entropy.s.clone(),
                s_prev: self.entropy.s_prev.clone(),
            },
            next_frame: self.next_frame as u64,
            gaze: self.tracker.as_ref().map(|t| t.state),
            prev_frame: self.tracker.as_ref().and_then(|t| t.previous_frame().cloned()),
            running_mi: self.running_mi.clone(),
        }
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        write_file(path, &self.checkpoint().encode())?;
        let arch = &self.dynamics.w.arch;
        let side = Sidecar {
            format: "CAL2".into(),
            version: calfoa_core::checkpoint::VERSION,
            arch: arch.descriptor(),
            n: arch.n_params(),
            criterion: self.cfg.criterion.to_string(),
            train_density: self.cfg.train_density.to_string(),
            config_hash: self.cfg.trajectory_hash(),
            frame_index: self.next_frame as u64,
        };
        let mut json = serde_json::to_string_pretty(&side)?;
        json.push('\n');
        write_file(&sidecar_path(path), json.as_bytes())
    }

    /// Train on one frame: ingest, gaze, density, potential, dynamics.
    pub fn step(&mut self) -> Result<FramePotential> {
        let t = self.next_frame;
        let at = |phase| move |source| CliError::Frame { frame: t, phase, source };
        let frame = self.stream.frame(t).map_err(at("ingest"))?;
        let gaze = match &mut self.tracker {
            Some(tr) => Some(tr.advance(&frame).map_err(at("attention"))?),
            None => None,
        };
        let density = self.cfg.density(self.cfg.train_density);
        let support = density_support(&density, gaze.as_ref(), frame.width(), frame.height(), t)
            .map_err(at("density"))?;
        let out = frame_potential_and_grad(&self.dynamics.w, &frame, &support, &mut self.entropy)
            .map_err(at("objective"))?;
        self.running_mi.add_values(out.potential.h_cond, &out.pbar);
        cal_step(&mut self.dynamics, &out.grad).map_err(at("dynamics"))?;
        self.next_frame += 1;
        Ok(out.potential)
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub frames_trained: usize,
    pub last: Option<FramePotential>,
    /// `(h_cond, h_out, mi)` over the whole training segment so far.
    pub running_mi: Option<(f64, f64, f64)>,
    pub elapsed: Duration,
}

/// Keep the header and rows whose leading frame index is below `limit`.
fn truncate_csv(path: &Path, header: &str, limit: usize) -> Result<()> {
    let kept = match fs::read_to_string(path) {
        Ok(text) => text
            .lines()
            .skip(1)
            .filter(|l| l.split(',').next().and_then(|f| f.parse::<usize>().ok()).is_some_and(|f| f < limit))
            .fold(format!("{header}\n"), |mut acc, l| {
                acc.push_str(l);
                acc.push('\n');
                acc
            }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => format!("{header}\n"),
        Err(e) => return Err(CliError::io(path, e)),
    };
    write_file(path, kept.as_bytes())
}

fn append(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::OpenOptions::new().append(true).open(path).map_err(|e| CliError::io(path, e))?;
    Ok(BufWriter::new(f))
}

/// Run (or continue) training and write metrics, MI log and checkpoints.
pub fn train(cfg: &ExperimentConfig, resume: Option<&Path>) -> Result<TrainSummary> {
    let started = Instant::now();
    let mut trainer = match resume {
        Some(p) => Trainer::resume(cfg, p)?,
        None => Trainer::fresh(cfg)?,
    };
    let out_dir = cfg.resolved_output_dir();
    create_dir(&out_dir)?;
    write_file(&out_dir.join("config.txt"), cfg.canonical().as_bytes())?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let mi_path = out_dir.join(MI_LOG_FILE);
    truncate_csv(&metrics_path, METRICS_HEADER, trainer.next_frame)?;
    if cfg.mi_log_every > 0 {
        truncate_csv(&mi_path, MI_LOG_HEADER, trainer.next_frame)?;
    }
    let mut metrics = append(&metrics_path)?;
    let mut mi_log = if cfg.mi_log_every > 0 { Some(append(&mi_path)?) } else { None };
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| CliError::io(&p, e)
    };

    let first = trainer.next_frame;
    let mut last = None;
    while trainer.next_frame < cfg.train_frames {
        let t = trainer.next_frame;
        let u = trainer.step()?;
        writeln!(metrics, "{t},{:e},{:e},{:e},{:e}", u.u, u.h_cond, u.h_out, u.penalty).map_err(io(&metrics_path))?;
        if let Some(log) = &mut mi_log {
            if (t + 1) % cfg.mi_log_every == 0 {
                let (hc, ho, mi) = trainer.running_mi.values()?;
                writeln!(log, "{t},{hc:e},{ho:e},{mi:e}").map_err(io(&mi_path))?;
            }
        }
        let done = t + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.train_frames {
            metrics.flush().map_err(io(&metrics_path))?;
            if let Some(log) = &mut mi_log {
                log.flush().map_err(io(&mi_path))?;
            }
            trainer.write_checkpoint(&out_dir.join(format!("checkpoint_{done:06}.cal2")))?;
        }
        last = Some(u);
    }
    metrics.flush().map_err(io(&metrics_path))?;
    if let Some(log) = &mut mi_log {
        log.flush().map_err(io(&mi_path))?;
    }
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    trainer.write_checkpoint(&checkpoint)?;
    Ok(TrainSummary {
        out_dir,
        checkpoint,
        frames_trained: trainer.next_frame - first,
        last,
        running_mi: trainer.running_mi.values().ok(),
        elapsed: started.elapsed(),
    })
}

/// Load the weights of a checkpoint, checking them against the configuration.
pub fn load_params(cfg: &ExperimentConfig, path: &Path) -> Result<ParamVector> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let ck = Checkpoint::decode(&bytes)?;
    let arch = cfg.architecture()?;
    if ck.arch.descriptor() != arch.descriptor() {
        return Err(CliError::Mismatch(format!(
            "checkpoint architecture {} but config asks for {}",
            ck.arch.descriptor(),
            arch.descriptor()
        )));
    }
    Ok(ParamVector::from_values(&arch, ck.w)?)
}

/// MI rows for `kinds` on the test segment that follows training.
pub fn evaluate(cfg: &ExperimentConfig, params: &ParamVector, kinds: &[DensityKind]) -> Result<EvalReport> {
    if cfg.test_frames == 0 {
        return Err(CliError::Invalid("test.frames must be >= 1 for evaluation".into()));
    }
    let stream = open_stream(&cfg.stream_spec()?)?;
    let (t1, t2) = (cfg.train_frames, cfg.train_frames + cfg.test_frames);
    let rows = density_table(params, &stream, t1, t2, cfg.gaze, cfg.window_fraction, kinds)?;
    Ok(EvalReport {
        stream: cfg.stream.source.name().to_string(),
        arch: params.arch.descriptor(),
        train_density: cfg.train_density,
        criterion: cfg.criterion,
        seed: cfg.seed,
        rows: rows.iter().map(ReportRow::from).collect(),
    })
}

/// Evaluate a checkpoint and write `report.json` into the output directory.
pub fn eval_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path, kinds: &[DensityKind]) -> Result<(EvalReport, PathBuf)> {
    let params = load_params(cfg, checkpoint)?;
    let report = evaluate(cfg, &params, kinds)?;
    let out_dir = cfg.resolved_output_dir();
    create_dir(&out_dir)?;
    let path = out_dir.join(REPORT_FILE);
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_file(&path, json.as_bytes())?;
    Ok((report, path))
}

/// Write the configured stream as a PGM frame directory.
pub fn gen_stream(cfg: &ExperimentConfig, dir: &Path) -> Result<usize> {
    let stream = open_stream(&cfg.stream_spec()?)?;
    create_dir(dir)?;
    Ok(write_frame_directory(&stream, dir)?)
}

/// Integrate the gaze over `frames` frames and write the scanpath CSV,
/// fixation heatmap PGM and `x,y,speed` scatter CSV into `dir`.
pub fn scanpath(cfg: &ExperimentConfig, frames: usize, grid: (usize, usize), dir: &Path) -> Result<Vec<ScanpathSample>> {
    let mut spec = cfg.stream_spec()?;
    spec.total_frames = frames.max(1);
    let stream = open_stream(&spec)?;
    let mut tracker = FoaTracker::new(cfg.gaze, spec.width, spec.height)?;
    let mut samples = Vec::with_capacity(frames);
    for t in 0..frames {
        let state = tracker.advance(&stream.frame(t)?)?;
        samples.push(ScanpathSample { frame: t, state });
    }
    let art = foa_artifacts(&samples, spec.width, spec.height, grid)?;
    create_dir(dir)?;
    write_file(&dir.join("scanpath.csv"), calfoa_core::attention::scanpath_csv(&samples).as_bytes())?;
    write_file(&dir.join("heatmap.pgm"), &art.heatmap_pgm)?;
    write_file(&dir.join("heatmap.csv"), art.scatter_csv.as_bytes())?;
    Ok(samples)
}

/// One ε-sweep of the verification set.
#[derive(Debug, Clone)]
pub struct TheoremCase {
    pub name: &'static str,
    pub beta: f64,
    pub rows: Vec<SweepRow>,
    pub verdict: SweepVerdict,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("eps,l2_values,l2_derivs\n");
    for r in rows {
        out.push_str(&format!("{},{:.12e},{:.12e}\n", r.eps, r.l2_values, r.l2_derivs));
    }
    out
}

/// Run the ε-sweep on every toy problem; writes `<name>.csv` files when `dir` is given.
pub fn verify_theorem(eps: &[f64], dir: Option<&Path>) -> Result<Vec<TheoremCase>> {
    if let Some(d) = dir {
        create_dir(d)?;
    }
    toy_problems()
        .into_iter()
        .map(|(name, p)| {
            let rows = epsilon_sweep(&p, eps)?;
            if let Some(d) = dir {
                write_file(&d.join(format!("{name}.csv")), sweep_csv(&rows).as_bytes())?;
            }
            Ok(TheoremCase { name, beta: p.beta, verdict: SweepVerdict::of(&rows), rows })
        })
        .collect()
}
