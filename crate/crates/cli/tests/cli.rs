use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use calfoa_cli::runner::{self, CHECKPOINT_FILE, METRICS_FILE, MI_LOG_FILE, REPORT_FILE};
use calfoa_cli::ExperimentConfig;
use calfoa_core::attention::DensityKind;
use calfoa_core::network::{init_params, ParamVector};
use calfoa_core::stream::BlobScene;

fn calfoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calfoa")).args(args).output().expect("run calfoa")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small moving-blob experiment that trains in well under a second.
fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "name = small\n\
         stream.kind = moving-blobs\n\
         stream.width = 40\n\
         stream.height = 30\n\
         stream.blobs = 2\n\
         network.arch = k5c4t-k3c5s\n\
         train.density = FOAW\n\
         train.criterion = VAR\n\
         train.frames = 40\n\
         test.frames = 10\n\
         dynamics.dt = 0.005\n\
         output.mi_log_every = 5\n\
         output.dir = {}\n{extra}",
        dir.join("out").display()
    );
    let path = dir.join("exp.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn artifacts(dir: &Path) -> Vec<Vec<u8>> {
    [METRICS_FILE, MI_LOG_FILE, CHECKPOINT_FILE, "checkpoint.json", REPORT_FILE]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}")))
        .collect()
}

fn train_and_eval(cfg: &Path, out: &Path) -> Vec<Vec<u8>> {
    let o = calfoa(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = out.join(CHECKPOINT_FILE);
    let o = calfoa(&["eval", "--config", cfg.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    artifacts(out)
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = train_and_eval(&write_config(a.path(), ""), &a.path().join("out"));
    let second = train_and_eval(&write_config(b.path(), ""), &b.path().join("out"));
    assert_eq!(first, second);
    let metrics = String::from_utf8(first[0].clone()).unwrap();
    assert!(metrics.starts_with("frame,U,h_cond,h_out,penalty\n"));
    assert_eq!(metrics.lines().count(), 41);
}

#[test]
fn resumed_training_matches_straight_through() {
    let straight = tempfile::tempdir().unwrap();
    let cfg = write_config(straight.path(), "output.checkpoint_every = 15\n");
    let o = calfoa(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = straight.path().join("out");
    let mid = out.join("checkpoint_000015.cal2");
    assert!(mid.exists());

    let resumed = tempfile::tempdir().unwrap();
    let cfg2 = write_config(resumed.path(), "");
    // Seed the resumed run's logs with the rows written before the checkpoint.
    let out2 = resumed.path().join("out");
    fs::create_dir_all(&out2).unwrap();
    for f in [METRICS_FILE, MI_LOG_FILE] {
        fs::copy(out.join(f), out2.join(f)).unwrap();
    }
    let o = calfoa(&["train", "--config", cfg2.to_str().unwrap(), "--resume", mid.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [CHECKPOINT_FILE, METRICS_FILE, MI_LOG_FILE] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(out2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_rejects_a_different_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert!(calfoa(&["train", "--config", cfg.to_str().unwrap()]).status.success());
    let ckpt = dir.path().join("out").join(CHECKPOINT_FILE);
    let o = calfoa(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "objective.lambda_c=7",
        "--resume",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("different configuration"), "{}", stderr(&o));
}

#[test]
fn training_from_emitted_frames_matches_in_memory_stream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "");
    let frames = dir.path().join("frames");
    let o = calfoa(&["gen-stream", "--config", cfg_path.to_str().unwrap(), "--out", frames.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_dir(&frames).unwrap().count(), 50);

    let mut memory = ExperimentConfig::from_file(&cfg_path).unwrap();
    memory.output_dir = dir.path().join("memory");
    let mut disk = memory.clone();
    disk.set("stream.kind", "frame-directory").unwrap();
    disk.set("stream.path", frames.to_str().unwrap()).unwrap();
    disk.output_dir = dir.path().join("disk");
    let a = runner::train(&memory, None).unwrap();
    let b = runner::train(&disk, None).unwrap();
    assert_eq!(fs::read(a.checkpoint).unwrap(), fs::read(b.checkpoint).unwrap());
    assert_eq!(
        fs::read(memory.output_dir.join(METRICS_FILE)).unwrap(),
        fs::read(disk.output_dir.join(METRICS_FILE)).unwrap()
    );
}

#[test]
fn zero_training_frames_checkpoint_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_file(&write_config(dir.path(), "")).unwrap();
    cfg.train_frames = 0;
    let s = runner::train(&cfg, None).unwrap();
    assert_eq!(s.frames_trained, 0);
    let loaded = runner::load_params(&cfg, &s.checkpoint).unwrap();
    let init = init_params(&cfg.architecture().unwrap(), cfg.network_seed()).unwrap();
    assert_eq!(loaded, init);
}

#[test]
fn evaluation_needs_test_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert!(calfoa(&["train", "--config", cfg.to_str().unwrap()]).status.success());
    let ckpt = dir.path().join("out").join(CHECKPOINT_FILE);
    let o = calfoa(&["eval", "--config", cfg.to_str().unwrap(), "--set", "test.frames=0", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_parameters_carry_no_information() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_file(&write_config(dir.path(), "")).unwrap();
    let zero = ParamVector::zeros(&cfg.architecture().unwrap());
    let report = runner::evaluate(&cfg, &zero, &[DensityKind::Uni, DensityKind::Foa, DensityKind::Foaw]).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        assert!(row.mi.abs() < 1e-9, "{row:?}");
        assert!((row.h_out - 1.0).abs() < 1e-9);
    }
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "seed = 3\nnetwork.depth = 4\n").unwrap();
    let o = calfoa(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let o = calfoa(&["train", "--set", "dynamics.dt=0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_theorem_succeeds_and_writes_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let o = calfoa(&["verify-theorem", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout.clone()).unwrap();
    assert!(csv.starts_with("problem,beta,eps,l2_values,l2_derivs,residual\n"));
    assert_eq!(csv.lines().count(), 1 + 5 * 4);
    let one = fs::read_to_string(dir.path().join("one-minus-cos.csv")).unwrap();
    assert_eq!(one.lines().count(), 5);
    assert!(stderr(&o).contains("[beta = 0]") && stderr(&o).contains("[beta > 0]"));
}

#[test]
fn scanpath_settles_on_a_single_static_blob() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [("stream.kind", "moving-blobs"), ("stream.width", "64"), ("stream.height", "48")] {
        cfg.set(k, v).unwrap();
    }
    cfg.stream.blobs = 1;
    cfg.stream.blob_speed = 0.0;
    cfg.stream.texture = 0.0;
    let samples = runner::scanpath(&cfg, 300, (16, 12), dir.path()).unwrap();
    let centre = BlobScene::new(&cfg.stream_spec().unwrap()).unwrap().centers(0)[0];
    let near = samples[150..].iter().filter(|s| (s.state.a[0] - centre.0).hypot(s.state.a[1] - centre.1) < 5.0).count();
    assert_eq!(near, 150, "gaze did not stay on the blob at {centre:?}");
    let csv = fs::read_to_string(dir.path().join("scanpath.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    let pgm = fs::read(dir.path().join("heatmap.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 12\n255\n"));
    assert!(dir.path().join("heatmap.csv").exists());
}

#[test]
fn grid_runs_every_cell_and_picks_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = calfoa(&[
        "grid",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "train.frames=10",
        "--set",
        "test.frames=4",
        "--vary",
        "train.density=FOA,RND",
        "--vary",
        "objective.lambda_e=200,400",
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4 * 3);
    let best = fs::read_to_string(out.join("best.csv")).unwrap();
    assert_eq!(best.lines().count(), 1 + 2 * 3);
    assert!(out.join("RND_400").join(REPORT_FILE).exists());
}
