use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use calfoa_cli::config::ExperimentConfig;
use calfoa_cli::grid::{default_axes, run_grid, GridAxis};
use calfoa_cli::runner;
use calfoa_core::attention::DensityKind;
use calfoa_core::theory::{RESIDUAL_TOLERANCE, DEFAULT_EPS};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "calfoa", version, about = "Online MI learning under focus-of-attention scanpaths")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set foa.rho=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            let Some((k, v)) = o.split_once('=') else { bail!("--set expects KEY=VALUE, got '{o}'") };
            cfg.set(k.trim(), v.trim()).map_err(|m| anyhow::anyhow!("--set {o}: {m}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on the training segment; writes metrics, MI log and checkpoints.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test segment; writes report.json.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test densities to evaluate.
        #[arg(long, value_delimiter = ',', default_value = "UNI,FOA,FOAW")]
        densities: Vec<DensityKind>,
    },
    /// Write the configured stream (training plus test segment) as PGM frames.
    GenStream {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the gaze and export the scanpath and fixation heatmap.
    Scanpath {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 2000)]
        frames: usize,
        /// Heatmap grid as WxH.
        #[arg(long, default_value = "28x28")]
        grid: String,
        /// Defaults to the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the epsilon sweep on the quadratic toy problems.
    VerifyTheorem {
        /// Write one `<problem>.csv` per toy problem here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Train and evaluate a grid of cells, one child process per cell.
    Grid {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Swept key, `key=v1,v2`. Repeatable; defaults to density × criterion.
        #[arg(long = "vary", value_name = "KEY=V1,V2")]
        vary: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn parse_grid(s: &str) -> anyhow::Result<(usize, usize)> {
    let (w, h) = s.split_once('x').context("grid must look like WxH")?;
    Ok((w.parse()?, h.parse()?))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Train { cfg, resume } => {
            let cfg = cfg.load()?;
            let s = runner::train(&cfg, resume.as_deref())?;
            let fps = s.frames_trained as f64 / s.elapsed.as_secs_f64().max(1e-9);
            eprintln!("trained {} frames in {:.2?} ({fps:.1} frames/s)", s.frames_trained, s.elapsed);
            if let Some((hc, ho, mi)) = s.running_mi {
                println!("training MI {mi:.6} (h_cond {hc:.6}, h_out {ho:.6})");
            }
            println!("checkpoint {}", s.checkpoint.display());
        }
        Cmd::Eval { cfg, checkpoint, densities } => {
            let cfg = cfg.load()?;
            let (report, path) = runner::eval_checkpoint(&cfg, &checkpoint, &densities)?;
            println!("test_density,h_cond,h_out,mi");
            for r in &report.rows {
                println!("{},{:.6},{:.6},{:.6}", r.test_density, r.h_cond, r.h_out, r.mi);
            }
            eprintln!("report {}", path.display());
        }
        Cmd::GenStream { cfg, out } => {
            let n = runner::gen_stream(&cfg.load()?, &out)?;
            println!("wrote {n} frames to {}", out.display());
        }
        Cmd::Scanpath { cfg, frames, grid, out } => {
            let cfg = cfg.load()?;
            let dir = out.unwrap_or_else(|| cfg.resolved_output_dir());
            runner::scanpath(&cfg, frames, parse_grid(&grid)?, &dir)?;
            println!("scanpath artifacts in {}", dir.display());
        }
        Cmd::VerifyTheorem { out, eps } => {
            let eps = eps.unwrap_or_else(|| DEFAULT_EPS.to_vec());
            let cases = runner::verify_theorem(&eps, out.as_deref())?;
            println!("problem,beta,eps,l2_values,l2_derivs,residual");
            for c in &cases {
                for r in &c.rows {
                    println!("{},{},{},{:.12e},{:.12e},{:.3e}", c.name, c.beta, r.eps, r.l2_values, r.l2_derivs, r.residual);
                }
            }
            let mut ok = true;
            for (label, conservative) in [("beta = 0", true), ("beta > 0", false)] {
                for c in cases.iter().filter(|c| (c.beta == 0.0) == conservative) {
                    let v = &c.verdict;
                    let good = v.monotone && v.max_residual < RESIDUAL_TOLERANCE;
                    ok &= good;
                    eprintln!(
                        "[{label}] {}: monotone={} ratio values={:.3} derivs={:.3} residual={:.1e} {}",
                        c.name,
                        v.monotone,
                        v.value_ratio,
                        v.deriv_ratio,
                        v.max_residual,
                        if good { "ok" } else { "FAIL" }
                    );
                }
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Grid { cfg, vary, jobs } => {
            let cfg = cfg.load()?;
            let axes = if vary.is_empty() {
                default_axes()
            } else {
                vary.iter().map(|v| v.parse()).collect::<Result<Vec<GridAxis>, _>>()?
            };
            let exe = std::env::current_exe().context("locating the calfoa executable")?;
            let out = run_grid(&exe, &cfg, &axes, jobs)?;
            println!("{} cells done, summary {}, best {}", out.cells.len(), out.summary.display(), out.best.display());
            for (label, err) in &out.failures {
                eprintln!("cell {label} failed: {err}");
            }
            if !out.failures.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
