//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The exit status is nonzero only
//! when a criterion panics or errors; criterion outcomes are reported, not
//! asserted. `CALFOA_ACCEPTANCE_FULL=1` runs the full-frame trainings of
//! criterion 6 even when their projected runtime exceeds its budget, and
//! `CALFOA_ACCEPTANCE_ONLY=3,5` restricts the run to the listed criteria.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use calfoa_cli::runner::{self, Trainer, CHECKPOINT_FILE, METRICS_FILE, MI_LOG_FILE, REPORT_FILE};
use calfoa_cli::ExperimentConfig;
use calfoa_core::attention::{
    compute_mass_map, density_support, gravitational_field, step_gaze, DensityKind, DensitySpec, GazeParams,
    GazeState, MassMap,
};
use calfoa_core::dynamics::{cal_step, DynamicsParams, DynamicsState};
use calfoa_core::evaluation::MiAccumulator;
use calfoa_core::network::{forward, init_params, Architecture, ParamVector};
use calfoa_core::objective::{frame_potential_and_grad, gradient_check, Criterion, EntropyParams, EntropyState};
use calfoa_core::rng::stream_rng;
use calfoa_core::theory::{epsilon_sweep, toy_problems, DEFAULT_EPS, RESIDUAL_TOLERANCE};
use calfoa_core::Frame;
use rand::Rng;

const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_STEP: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const MI_INSTANCES: usize = 1000;
const MI_TOL: f64 = 1e-9;
const SWEEP_RATIO: f64 = 0.10;
const SWEEP_BUDGET: Duration = Duration::from_secs(60);
const SETTLE_TOL: f64 = 1e-6;
const ENERGY_SLACK: f64 = 1e-12;
const ENERGY_STEPS: usize = 10_000;
const FIXATION_RADIUS: f64 = 5.0;
const FIXATION_STEPS: usize = 2000;
const FIXATION_TAIL: usize = 500;
const FIELD_TOL: f64 = 1e-12;
const SEEDS: [u64; 4] = [1, 2, 3, 4];
const MIN_SEED_WINS: usize = 3;
const MAIN_BUDGET: Duration = Duration::from_secs(600);
const FOA_FPS: f64 = 100.0;
const UNI_D_FPS: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = fn(&Path) -> Result<Outcome, Box<dyn std::error::Error>>;

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("CALFOA_ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let scratch = tempfile::tempdir().expect("scratch directory");
    let checks: [(usize, &str, Check); 9] = [
        (1, "gradient exactness", gradient_exactness),
        (2, "MI identities", mi_identities),
        (3, "epsilon-limit verification", epsilon_limit),
        (4, "CAL integrator", integrator),
        (5, "attention fixation", attention_fixation),
        (6, "FOA-trained beats UNI-trained on FOA test", main_result),
        (7, "FOA-trained at least RND-trained on FOA test", random_ablation),
        (8, "determinism and resumability", determinism),
        (9, "performance budget", performance),
    ];
    let mut passed = 0;
    let mut ran = 0;
    let mut errors = 0;
    for (id, name, check) in checks {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let dir = scratch.path().join(format!("c{id}"));
        fs::create_dir_all(&dir).expect("criterion directory");
        let start = Instant::now();
        let result = std::panic::catch_unwind(|| check(&dir));
        let secs = start.elapsed().as_secs_f64();
        ran += 1;
        let line = match result {
            Ok(Ok(o)) => {
                passed += usize::from(o.pass);
                format!("{} {id}. {name}: {} [{secs:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail)
            }
            Ok(Err(e)) => {
                errors += 1;
                format!("FAIL {id}. {name}: error: {e} [{secs:.1} s]")
            }
            Err(_) => {
                errors += 1;
                format!("FAIL {id}. {name}: panicked [{secs:.1} s]")
            }
        };
        println!("{line}");
    }
    println!("acceptance: {passed}/{ran} criteria passed");
    if errors > 0 {
        std::process::exit(1);
    }
}

fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
    let mut rng = stream_rng(seed, "acceptance/frame");
    Frame::new(w, h, 0, (0..w * h).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn perturbed(arch: &Architecture, seed: u64, spread: f64) -> ParamVector {
    let mut p = init_params(arch, seed).unwrap();
    let mut rng = stream_rng(seed, "acceptance/perturb");
    for v in &mut p.values {
        *v += rng.gen_range(-spread..spread);
    }
    p
}

fn gradient_exactness(_: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let start = Instant::now();
    let minis = ["k5c4t-k7c3s", "k5c3t-k5c3s", "k3c5t-k7c3s"];
    let (w, h) = (16, 16);
    let f0 = random_frame(w, h, 11);
    let f1 = random_frame(w, h, 12);
    let gaze = GazeState { a: [6.3, 9.7], v: [0.0, 0.0] };
    let obj = EntropyParams { lambda_c: 1.0, lambda_e: 2.0, lambda_s: 1.5, zeta_s: 0.3, dt_s: 0.7 };
    let mut worst = (0.0f64, String::new());
    let mut cases = 0;
    for (i, name) in minis.iter().enumerate() {
        let arch: Architecture = name.parse()?;
        let p = perturbed(&arch, 20 + i as u64, 0.3);
        let coords: Vec<usize> = (0..p.n()).collect();
        for criterion in [Criterion::Pla, Criterion::Var, Criterion::Avg] {
            let mut warm = EntropyState::new(criterion, obj, arch.m())?;
            let uni = density_support(&DensitySpec::new(DensityKind::Uni), None, w, h, 0)?;
            frame_potential_and_grad(&p, &f0, &uni, &mut warm)?;
            for kind in [DensityKind::Uni, DensityKind::Foa, DensityKind::Foaw] {
                let mut spec = DensitySpec::new(kind);
                spec.window_fraction = 0.3;
                let support = density_support(&spec, Some(&gaze), w, h, 1)?;
                let err = gradient_check(&p, &f1, &support, &warm, &coords, GRAD_STEP)?;
                cases += 1;
                if err > worst.0 {
                    worst = (err, format!("{name} {criterion} {kind}"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    Ok(outcome(
        worst.0 < GRAD_REL_TOL && elapsed < GRAD_BUDGET,
        format!(
            "{cases} cases, max relative error {:.2e} ({}) (limit {GRAD_REL_TOL:e}); runtime {:.1} s (limit {} s)",
            worst.0,
            worst.1,
            elapsed.as_secs_f64(),
            GRAD_BUDGET.as_secs()
        ),
    ))
}

/// Base-m Shannon entropy, written out independently of the library.
fn entropy_oracle(p: &[f64]) -> f64 {
    let m = p.len() as f64;
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>() / m.ln()
}

fn mi_identities(_: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut rng = stream_rng(7, "acceptance/mi");
    let archs = ["k3c4t-k3c3s", "k5c3t-k3c5s", "k1c2t-k3c2s", "k3c3t-k5c10s"];
    let kinds = [DensityKind::Uni, DensityKind::Foa, DensityKind::Foaw, DensityKind::Rnd];
    let mut violations = 0;
    let mut mismatch = 0.0f64;
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..MI_INSTANCES {
        let arch: Architecture = archs[i % archs.len()].parse()?;
        let (w, h) = (rng.gen_range(3..14), rng.gen_range(3..14));
        let p = perturbed(&arch, 100 + i as u64, rng.gen_range(0.0..3.0));
        let frame = random_frame(w, h, 500 + i as u64);
        let gaze = GazeState { a: [rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64)], v: [0.0, 0.0] };
        let mut spec = DensitySpec::new(kinds[rng.gen_range(0..kinds.len())]);
        spec.window_fraction = rng.gen_range(0.1..1.0);
        spec.seed = i as u64;
        let support = density_support(&spec, Some(&gaze), w, h, i)?;
        let cache = forward(&p, &frame, support.bounds())?;
        let out = cache.outputs();
        let mut acc = MiAccumulator::new(arch.m());
        acc.add(&out, &support)?;
        // Oracle: direct sums over the support.
        let mut pbar = vec![0.0; arch.m()];
        let mut h_cond = 0.0;
        for &(x, y, wt) in &support.entries {
            let px = out.at(x, y).ok_or("support pixel outside the output region")?;
            h_cond += wt * entropy_oracle(px);
            for (a, b) in pbar.iter_mut().zip(px) {
                *a += wt * b;
            }
        }
        let h_out = entropy_oracle(&pbar);
        let mi = h_out - h_cond;
        range = (range.0.min(mi), range.1.max(mi));
        if !(-MI_TOL..=1.0 + MI_TOL).contains(&mi) || h_out < h_cond - MI_TOL {
            violations += 1;
        }
        match acc.values() {
            Ok((hc, ho, lm)) => mismatch = mismatch.max((hc - h_cond).abs()).max((ho - h_out).abs()).max((lm - mi).abs()),
            Err(_) => violations += 1,
        }
    }
    let arch = Architecture::small();
    let frame = random_frame(40, 30, 3);
    let zero = ParamVector::zeros(&arch);
    let support = density_support(&DensitySpec::new(DensityKind::Uni), None, 40, 30, 0)?;
    let cache = forward(&zero, &frame, support.bounds())?;
    let mut acc = MiAccumulator::new(arch.m());
    acc.add(&cache.outputs(), &support)?;
    let (_, _, zero_mi) = acc.values()?;
    Ok(outcome(
        violations == 0 && mismatch < MI_TOL && zero_mi.abs() < MI_TOL,
        format!(
            "{MI_INSTANCES} instances, {violations} violations, mi in [{:.3e}, {:.4}], library vs oracle {mismatch:.1e}; zero-init mi {zero_mi:.1e}",
            range.0, range.1
        ),
    ))
}

fn epsilon_limit(_: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, problem) in toy_problems() {
        let rows = epsilon_sweep(&problem, &DEFAULT_EPS)?;
        let v = calfoa_core::theory::SweepVerdict::of(&rows);
        pass &= v.passes(SWEEP_RATIO);
        parts.push(format!(
            "{name}(beta={}) mono={} ratio={:.3}/{:.3} res={:.0e}",
            problem.beta, v.monotone, v.value_ratio, v.deriv_ratio, v.max_residual
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < SWEEP_BUDGET;
    Ok(outcome(
        pass,
        format!(
            "{}; need monotone, ratios < {SWEEP_RATIO}, residual < {RESIDUAL_TOLERANCE:e}; runtime {:.1} s (limit {} s)",
            parts.join("; "),
            elapsed.as_secs_f64(),
            SWEEP_BUDGET.as_secs()
        ),
    ))
}

fn integrator(_: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let params = DynamicsParams { k: 0.0, ..DynamicsParams::default() };
    let arch = Architecture::custom(&[], 1, 2)?;
    let c = [1.5, -2.0, 0.25, 3.0];
    let mut s = DynamicsState::new(ParamVector::zeros(&arch), params)?;
    for _ in 0..2000 {
        let g: Vec<f64> = s.w.values.iter().zip(&c).map(|(w, c)| w - c).collect();
        cal_step(&mut s, &g)?;
    }
    let settle = s.w.values.iter().zip(&c).map(|(w, c)| (w - c).abs()).fold(0.0, f64::max);

    // Frozen diagonal quadratics with curvatures up to the one-step energy bound.
    let bound = DynamicsParams::default().energy_curvature_bound();
    let mut rng = stream_rng(4, "acceptance/energy");
    let mut worst_rise = f64::NEG_INFINITY;
    for trial in 0..20 {
        let p = DynamicsParams::default();
        let curv: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..bound - p.k)).collect();
        let centre: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w0: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v0: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut s = DynamicsState::with_velocity(ParamVector::from_values(&arch, w0)?, v0, p, trial)?;
        let energy = |s: &DynamicsState| {
            let mut e = 0.0;
            for i in 0..4 {
                let (w, v) = (s.w.values[i], s.v[i]);
                e += 0.5 * p.alpha * v * v + 0.5 * p.k * w * w + 0.5 * curv[i] * (w - centre[i]).powi(2);
            }
            e
        };
        let mut prev = energy(&s);
        for _ in 0..ENERGY_STEPS / 20 {
            let g: Vec<f64> = (0..4).map(|i| curv[i] * (s.w.values[i] - centre[i])).collect();
            cal_step(&mut s, &g)?;
            let e = energy(&s);
            worst_rise = worst_rise.max(e - prev);
            prev = e;
        }
    }
    Ok(outcome(
        settle < SETTLE_TOL && worst_rise <= ENERGY_SLACK,
        format!(
            "settle error {settle:.1e} (limit {SETTLE_TOL:e}); max energy change {worst_rise:.1e} (limit {ENERGY_SLACK:e}) over {ENERGY_STEPS} steps, curvature up to {bound:.3}"
        ),
    ))
}

fn attention_fixation(_: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let (w, h) = (64usize, 48usize);
    let (cx, cy, sigma) = (45.0, 20.0, 3.0);
    let pixels: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let frame = Frame::new(w, h, 0, pixels)?;
    let p = GazeParams::default();
    let mass = compute_mass_map(&frame, None, p.w_detail, p.w_motion)?;
    let mut s = GazeState::centered(w, h);
    let mut tail_max = 0.0f64;
    for step in 0..FIXATION_STEPS {
        let e = gravitational_field(&mass, s.a, p.softening);
        s = step_gaze(s, [p.field_gain * e[0], p.field_gain * e[1]], p.rho, p.dt_gaze, w, h);
        if step >= FIXATION_STEPS - FIXATION_TAIL {
            tail_max = tail_max.max((s.a[0] - cx).hypot(s.a[1] - cy));
        }
    }

    let mut rng = stream_rng(9, "acceptance/field");
    let mut field_err = 0.0f64;
    for _ in 0..50 {
        let values: Vec<f64> = (0..64).map(|_| rng.gen::<f64>()).collect();
        let eps = rng.gen_range(0.5..2.0);
        let a = [rng.gen_range(-1.0..8.0), rng.gen_range(-1.0..8.0)];
        let m = MassMap { width: 8, height: 8, values: values.clone() };
        let got = gravitational_field(&m, a, eps);
        let mut brute = [0.0f64; 2];
        for y in 0..8 {
            for x in 0..8 {
                let (dx, dy) = (x as f64 - a[0], y as f64 - a[1]);
                let s = values[y * 8 + x] / (dx * dx + dy * dy + eps * eps);
                brute[0] += s * dx;
                brute[1] += s * dy;
            }
        }
        field_err = field_err.max((got[0] - brute[0]).abs()).max((got[1] - brute[1]).abs());
    }
    Ok(outcome(
        tail_max < FIXATION_RADIUS && field_err < FIELD_TOL,
        format!(
            "max distance over last {FIXATION_TAIL} of {FIXATION_STEPS} steps {tail_max:.3} px (limit {FIXATION_RADIUS}); field vs double loop {field_err:.1e} (limit {FIELD_TOL:e})"
        ),
    ))
}

fn experiment(dir: &Path, seed: u64, density: DensityKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { seed, train_density: density, criterion: Criterion::Avg, ..Default::default() };
    cfg.name = format!("{density}-{seed}");
    cfg.output_dir = dir.join(format!("{density}-{seed}"));
    cfg
}

/// FOA-row MI of a model trained with `density` under `seed`.
fn trained_foa_mi(dir: &Path, seed: u64, density: DensityKind) -> Result<f64, Box<dyn std::error::Error>> {
    let cfg = experiment(dir, seed, density);
    let summary = runner::train(&cfg, None)?;
    let params = runner::load_params(&cfg, &summary.checkpoint)?;
    let report = runner::evaluate(&cfg, &params, &[DensityKind::Foa])?;
    Ok(report.mi(DensityKind::Foa).ok_or("missing FOA row")?)
}

fn full_runs_requested() -> bool {
    std::env::var("CALFOA_ACCEPTANCE_FULL").is_ok_and(|v| v == "1")
}

fn main_result(dir: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let start = Instant::now();
    let foa: Vec<f64> = SEEDS.iter().map(|&s| trained_foa_mi(dir, s, DensityKind::Foa)).collect::<Result<_, _>>()?;

    // Project the full-frame trainings from a short timed run before committing to them.
    let probe_frames = 4;
    let mut trainer = Trainer::fresh(&experiment(dir, SEEDS[0], DensityKind::Uni))?;
    trainer.step()?;
    let t = Instant::now();
    for _ in 0..probe_frames {
        trainer.step()?;
    }
    let per_frame = t.elapsed() / probe_frames;
    let cfg = ExperimentConfig::default();
    let projected = start.elapsed() + per_frame * (cfg.train_frames * SEEDS.len()) as u32;
    if projected > MAIN_BUDGET && !full_runs_requested() {
        return Ok(outcome(
            false,
            format!(
                "not run: projected runtime {:.0} s exceeds the {} s budget ({:.2} UNI frames/s at {}x{}); set CALFOA_ACCEPTANCE_FULL=1 to run it; FOA-trained mi {}",
                projected.as_secs_f64(),
                MAIN_BUDGET.as_secs(),
                1.0 / per_frame.as_secs_f64(),
                cfg.stream.width,
                cfg.stream.height,
                fmt_list(&foa)
            ),
        ));
    }
    let uni: Vec<f64> = SEEDS.iter().map(|&s| trained_foa_mi(dir, s, DensityKind::Uni)).collect::<Result<_, _>>()?;
    let wins = foa.iter().zip(&uni).filter(|(f, u)| f > u).count();
    let elapsed = start.elapsed();
    Ok(outcome(
        wins >= MIN_SEED_WINS && elapsed < MAIN_BUDGET,
        format!(
            "FOA-trained mi {} vs UNI-trained mi {}: {wins}/{} seeds (need {MIN_SEED_WINS}); runtime {:.0} s (limit {} s)",
            fmt_list(&foa),
            fmt_list(&uni),
            SEEDS.len(),
            elapsed.as_secs_f64(),
            MAIN_BUDGET.as_secs()
        ),
    ))
}

fn random_ablation(dir: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let foa: Vec<f64> = SEEDS.iter().map(|&s| trained_foa_mi(dir, s, DensityKind::Foa)).collect::<Result<_, _>>()?;
    let rnd: Vec<f64> = SEEDS.iter().map(|&s| trained_foa_mi(dir, s, DensityKind::Rnd)).collect::<Result<_, _>>()?;
    let wins = foa.iter().zip(&rnd).filter(|(f, r)| **f >= **r - MI_TOL).count();
    let degenerate = foa.iter().chain(&rnd).all(|v| v.abs() < MI_TOL);
    Ok(outcome(
        wins >= MIN_SEED_WINS,
        format!(
            "FOA-trained mi {} vs RND-trained mi {}: {wins}/{} seeds (need {MIN_SEED_WINS}){}",
            fmt_list(&foa),
            fmt_list(&rnd),
            SEEDS.len(),
            if degenerate { "; all values are zero, so the comparison holds only by equality" } else { "" }
        ),
    ))
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{:.4}", x.max(0.0))).collect();
    format!("[{}]", items.join(", "))
}

fn small_run(dir: &Path, label: &str, density: DensityKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.set("stream.kind", "moving-blobs").unwrap();
    cfg.stream.width = 48;
    cfg.stream.height = 36;
    cfg.arch = "k5c6t-k5c4s".into();
    cfg.train_density = density;
    cfg.criterion = Criterion::Var;
    cfg.train_frames = 60;
    cfg.test_frames = 20;
    cfg.mi_log_every = 10;
    cfg.checkpoint_every = 25;
    cfg.dynamics.dt = 0.005;
    cfg.name = label.into();
    cfg.output_dir = dir.join(label);
    cfg
}

fn run_artifacts(cfg: &ExperimentConfig) -> Result<Vec<(String, Vec<u8>)>, Box<dyn std::error::Error>> {
    let s = runner::train(cfg, None)?;
    runner::eval_checkpoint(cfg, &s.checkpoint, &[DensityKind::Uni, DensityKind::Foa, DensityKind::Foaw])?;
    [METRICS_FILE, MI_LOG_FILE, CHECKPOINT_FILE, REPORT_FILE]
        .iter()
        .map(|f| Ok((f.to_string(), fs::read(cfg.output_dir.join(f))?)))
        .collect()
}

fn determinism(dir: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut notes = Vec::new();
    let mut pass = true;
    for density in [DensityKind::Foa, DensityKind::Uni] {
        let a = run_artifacts(&small_run(dir, &format!("{density}-a"), density))?;
        let b = run_artifacts(&small_run(dir, &format!("{density}-b"), density))?;
        let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
        pass &= differing.is_empty();
        notes.push(format!("{density}: {} files {}", a.len(), if differing.is_empty() { "identical".into() } else { format!("differ {differing:?}") }));

        let straight = small_run(dir, &format!("{density}-a"), density);
        let mut resumed = small_run(dir, &format!("{density}-r"), density);
        resumed.checkpoint_every = 0;
        let mid = straight.output_dir.join("checkpoint_000025.cal2");
        runner::train(&resumed, Some(&mid))?;
        let same_ckpt = fs::read(straight.output_dir.join(CHECKPOINT_FILE))? == fs::read(resumed.output_dir.join(CHECKPOINT_FILE))?;
        pass &= same_ckpt;
        notes.push(format!("{density}: resume at 25/60 {}", if same_ckpt { "bit-identical" } else { "DIFFERS" }));
    }
    Ok(outcome(pass, notes.join("; ")))
}

fn fps(cfg: &ExperimentConfig, warmup: usize, frames: usize) -> Result<f64, Box<dyn std::error::Error>> {
    let mut t = Trainer::fresh(cfg)?;
    for _ in 0..warmup {
        t.step()?;
    }
    let start = Instant::now();
    for _ in 0..frames {
        t.step()?;
    }
    Ok(frames as f64 / start.elapsed().as_secs_f64())
}

fn performance(dir: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let foa = experiment(dir, 1, DensityKind::Foa);
    let foa_fps = fps(&foa, 50, 1000)?;
    let mut uni = experiment(dir, 1, DensityKind::Uni);
    uni.arch = "D".into();
    uni.set("stream.kind", "moving-blobs").unwrap();
    uni.stream.width = 240;
    uni.stream.height = 180;
    let uni_fps = fps(&uni, 2, 10)?;
    Ok(outcome(
        foa_fps >= FOA_FPS && uni_fps >= UNI_D_FPS,
        format!("S FOA {foa_fps:.0} frames/s (need {FOA_FPS}); D UNI 240x180 {uni_fps:.2} frames/s (need {UNI_D_FPS})"),
    ))
}
