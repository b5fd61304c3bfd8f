//! Experiment grid: one subprocess per cell, then a summary table.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use calfoa_core::evaluation::EvalReport;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::runner::{CHECKPOINT_FILE, REPORT_FILE};

/// A config key swept over a list of values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for GridAxis {
    type Err = CliError;

    /// `key=v1,v2,...`
    fn from_str(s: &str) -> Result<Self> {
        let (key, vals) = s
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("grid axis '{s}' must look like key=v1,v2")))?;
        let values: Vec<String> = vals.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(CliError::Invalid(format!("grid axis '{s}' has no values")));
        }
        Ok(Self { key: key.trim().to_string(), values })
    }
}

/// The default sweep: training density × criterion.
pub fn default_axes() -> Vec<GridAxis> {
    vec![
        GridAxis { key: "train.density".into(), values: ["UNI", "FOA", "FOAW", "RND"].map(String::from).to_vec() },
        GridAxis { key: "train.criterion".into(), values: ["PLA", "VAR", "AVG"].map(String::from).to_vec() },
    ]
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub label: String,
    pub assignments: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

fn sanitize(v: &str) -> String {
    v.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

/// Cartesian product of the axes applied to `base`; each cell writes under
/// `<base output>/<label>`.
pub fn expand(base: &ExperimentConfig, axes: &[GridAxis]) -> Result<Vec<GridCell>> {
    let root = std::path::absolute(base.resolved_output_dir()).map_err(|e| CliError::io(&base.output_dir, e))?;
    let mut cells = vec![(Vec::<(String, String)>::new(), base.clone())];
    for axis in axes {
        let mut next = Vec::with_capacity(cells.len() * axis.values.len());
        for (assign, cfg) in &cells {
            for v in &axis.values {
                let mut cfg = cfg.clone();
                cfg.set(&axis.key, v).map_err(|msg| CliError::Invalid(format!("grid axis {}: {msg}", axis.key)))?;
                let mut assign = assign.clone();
                assign.push((axis.key.clone(), v.clone()));
                next.push((assign, cfg));
            }
        }
        cells = next;
    }
    cells
        .into_iter()
        .map(|(assignments, mut config)| {
            let label = if assignments.is_empty() {
                "base".to_string()
            } else {
                assignments.iter().map(|(_, v)| sanitize(v)).collect::<Vec<_>>().join("_")
            };
            config.name = format!("{}-{label}", base.name);
            config.output_dir = root.join(&label);
            config.validate()?;
            Ok(GridCell { label, assignments, config })
        })
        .collect()
}

fn run_child(exe: &Path, args: &[&std::ffi::OsStr], log: &Path) -> Result<()> {
    let out = Command::new(exe).args(args).output().map_err(|e| CliError::io(exe, e))?;
    let mut text = out.stdout;
    text.extend_from_slice(&out.stderr);
    fs::write(log, &text).map_err(|e| CliError::io(log, e))?;
    if !out.status.success() {
        return Err(CliError::Invalid(format!("child exited with {} (see {})", out.status, log.display())));
    }
    Ok(())
}

/// Train and evaluate one cell in two child processes of `exe`.
pub fn run_cell(exe: &Path, cell: &GridCell) -> Result<EvalReport> {
    let dir = &cell.config.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let cfg_path = dir.join("cell.cfg");
    fs::write(&cfg_path, cell.config.canonical()).map_err(|e| CliError::io(&cfg_path, e))?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    run_child(exe, &["train".as_ref(), "--config".as_ref(), cfg_path.as_os_str()], &dir.join("train.log"))?;
    run_child(
        exe,
        &["eval".as_ref(), "--config".as_ref(), cfg_path.as_os_str(), "--checkpoint".as_ref(), ckpt.as_os_str()],
        &dir.join("eval.log"),
    )?;
    let report = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&report).map_err(|e| CliError::io(&report, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub cells: Vec<(GridCell, EvalReport)>,
    pub failures: Vec<(String, String)>,
    pub summary: PathBuf,
    pub best: PathBuf,
}

/// Run every cell with at most `jobs` concurrent child processes and write
/// `summary.csv` (all cells) and `best.csv` (max-MI pick per training
/// density, criterion and test density) into the base output directory.
pub fn run_grid(exe: &Path, base: &ExperimentConfig, axes: &[GridAxis], jobs: usize) -> Result<GridOutcome> {
    let cells = expand(base, axes)?;
    let results: Mutex<Vec<Option<Result<EvalReport>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let r = run_cell(exe, cell);
                results.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
            });
        }
    });
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (cell, r) in cells.into_iter().zip(results.into_inner().unwrap_or_else(|p| p.into_inner())) {
        match r {
            Some(Ok(rep)) => done.push((cell, rep)),
            Some(Err(e)) => failures.push((cell.label, e.to_string())),
            None => failures.push((cell.label, "not run".into())),
        }
    }
    let root = std::path::absolute(base.resolved_output_dir()).map_err(|e| CliError::io(&base.output_dir, e))?;
    fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
    let summary = root.join("summary.csv");
    let best = root.join("best.csv");
    fs::write(&summary, summary_csv(axes, &done)).map_err(|e| CliError::io(&summary, e))?;
    fs::write(&best, best_csv(&done)).map_err(|e| CliError::io(&best, e))?;
    Ok(GridOutcome { cells: done, failures, summary, best })
}

pub fn summary_csv(axes: &[GridAxis], cells: &[(GridCell, EvalReport)]) -> String {
    let mut out = String::from("cell");
    for a in axes {
        out.push(',');
        out.push_str(&a.key);
    }
    out.push_str(",train_density,criterion,test_density,h_cond,h_out,mi\n");
    for (cell, rep) in cells {
        for row in &rep.rows {
            out.push_str(&cell.label);
            for (_, v) in &cell.assignments {
                out.push(',');
                out.push_str(v);
            }
            out.push_str(&format!(
                ",{},{},{},{},{},{}\n",
                rep.train_density, rep.criterion, row.test_density, row.h_cond, row.h_out, row.mi
            ));
        }
    }
    out
}

/// Highest-MI cell for each (training density, criterion, test density).
pub fn best_csv(cells: &[(GridCell, EvalReport)]) -> String {
    let mut picks: Vec<(String, String, String, f64, String)> = Vec::new();
    for (cell, rep) in cells {
        for row in &rep.rows {
            let key = (rep.train_density.to_string(), rep.criterion.to_string(), row.test_density.to_string());
            match picks.iter_mut().find(|p| (&p.0, &p.1, &p.2) == (&key.0, &key.1, &key.2)) {
                Some(p) if row.mi > p.3 => {
                    p.3 = row.mi;
                    p.4 = cell.label.clone();
                }
                Some(_) => {}
                None => picks.push((key.0, key.1, key.2, row.mi, cell.label.clone())),
            }
        }
    }
    let mut out = String::from("train_density,criterion,test_density,mi,cell\n");
    for (d, c, t, mi, label) in picks {
        out.push_str(&format!("{d},{c},{t},{mi},{label}\n"));
    }
    out
}
