//! ε → 0 verification for the second-order weight law on quadratic potentials.
//!
//! For `U(w, t) = ½ q |w − c(t)|²` the minimizer `w_ε` of the ε-weighted
//! action solves, per component,
//!
//! `ε²α w'''' − 2εα w''' + (α − εβ) w'' + β w' + (k + q) w = q c(t)`
//!
//! with `w(0) = w⁰`, `w'(0) = w¹`, `w''(T) = 0`, `αε w'''(T) = β w'(T)`.
//! As ε → 0 it approaches the causal limit `α w'' + β w' + (k + q) w = q c(t)`
//! with the same initial data.

pub mod banded;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use banded::{solve_banded, BandMatrix};

/// Moving target `c(t)` of the quadratic potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// `values[i]` holds on `[starts[i], starts[i+1])`; `starts[0] = 0`.
    Piecewise { starts: Vec<f64>, values: Vec<Vec<f64>> },
    /// `offset + amplitude · sin(omega t + phase)` per component.
    Sinusoid { offset: Vec<f64>, amplitude: Vec<f64>, omega: f64, phase: Vec<f64> },
}

impl Target {
    pub fn constant(c: Vec<f64>) -> Self {
        Self::Piecewise { starts: vec![0.0], values: vec![c] }
    }

    pub fn eval(&self, t: f64, d: usize) -> f64 {
        match self {
            Self::Piecewise { starts, values } => {
                let i = starts.partition_point(|&s| s <= t).max(1) - 1;
                values[i][d]
            }
            Self::Sinusoid { offset, amplitude, omega, phase } => offset[d] + amplitude[d] * (omega * t + phase[d]).sin(),
        }
    }

    /// Interior discontinuities inside `(a, b)`.
    fn breaks_in(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Self::Piecewise { starts, .. } => starts.iter().copied().filter(|&s| s > a && s < b).collect(),
            Self::Sinusoid { .. } => Vec::new(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Self::Piecewise { values, .. } => values[0].len(),
            Self::Sinusoid { offset, .. } => offset.len(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            Self::Piecewise { starts, values } => {
                !starts.is_empty()
                    && starts[0] == 0.0
                    && starts.windows(2).all(|w| w[0] < w[1])
                    && starts.len() == values.len()
                    && values.iter().all(|v| v.len() == dim && v.iter().all(|x| x.is_finite()))
            }
            Self::Sinusoid { offset, amplitude, omega, phase } => {
                omega.is_finite() && [offset, amplitude, phase].iter().all(|v| v.len() == dim)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("malformed target c(t)".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyProblem {
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub q: f64,
    pub eps: f64,
    pub horizon: f64,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub target: Target,
    /// Number of grid intervals.
    pub n: usize,
}

impl ToyProblem {
    pub fn dim(&self) -> usize {
        self.w0.len()
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.step();
        (0..=self.n).map(|i| i as f64 * h).collect()
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let fail = |m: &str| Err(Error::Config(format!("toy problem: {m}")));
        if !(1..=4).contains(&d) || self.w1.len() != d || self.target.dim() != d {
            return fail("dimension must be 1..=4 and consistent");
        }
        if !(self.alpha > 0.0) || self.beta < 0.0 || self.k < 0.0 || !(self.q >= 0.0) {
            return fail("need alpha > 0, beta >= 0, k >= 0, q >= 0");
        }
        if !(self.eps > 0.0) || !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return fail("need eps > 0 and a finite horizon > 0");
        }
        if self.n < 64 {
            return fail("grid needs at least 64 intervals");
        }
        self.target.validate(d)
    }
}

/// Sampled trajectory, component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub trajectory: Trajectory,
    /// Second-derivative samples, for boundary checks.
    pub second: Vec<Vec<f64>>,
    /// Worst relative residual of the equilibrated discrete system.
    pub residual: f64,
    pub pivot_ratio: f64,
}

pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Unknowns are `y_i = (w, w', w'', w''')` at node `i`, node-major, column `4i + j`.
///
/// Each interval contributes the midpoint box scheme
/// `(y_{i+1} − y_i) / h = A (y_i + y_{i+1}) / 2 + f(t_{i+½})`, which is
/// second-order and keeps the stiff `e^{t/ε}` modes well conditioned.
fn assemble(p: &ToyProblem, d: usize) -> (BandMatrix, Vec<f64>) {
    let n = p.n;
    let h = p.step();
    let size = 4 * (n + 1);
    let mut a = BandMatrix::zeros(size, 5, 5);
    let mut b = vec![0.0; size];
    let (al, be, e) = (p.alpha, p.beta, p.eps);
    let lead = e * e * al;
    // Companion row: w'''' = (q c − K w − β w' − (α − εβ) w'' + 2εα w''') / (ε²α).
    let last = [-(p.k + p.q) / lead, -be / lead, -(al - e * be) / lead, 2.0 * e * al / lead];

    a.set(0, 0, 1.0);
    b[0] = p.w0[d];
    a.set(1, 1, 1.0);
    b[1] = p.w1[d];
    for i in 0..n {
        let (lo, hi) = (4 * i, 4 * (i + 1));
        let row = 2 + 4 * i;
        for j in 0..3 {
            a.set(row + j, lo + j, -1.0 / h);
            a.set(row + j, hi + j, 1.0 / h);
            a.set(row + j, lo + j + 1, -0.5);
            a.set(row + j, hi + j + 1, -0.5);
        }
        let r = row + 3;
        for (j, &c) in last.iter().enumerate() {
            a.set(r, lo + j, -0.5 * c);
            a.set(r, hi + j, -0.5 * c);
        }
        a.set(r, lo + 3, a.get(r, lo + 3) - 1.0 / h);
        a.set(r, hi + 3, a.get(r, hi + 3) + 1.0 / h);
        let tm = (i as f64 + 0.5) * h;
        b[r] = p.q * p.target.eval(tm, d) / lead;
    }
    let end = 4 * n;
    a.set(size - 2, end + 2, 1.0);
    a.set(size - 1, end + 3, al * e);
    a.set(size - 1, end + 1, -be);
    (a, b)
}

/// Solve the ε-problem on the problem grid.
pub fn solve_eps_bvp(p: &ToyProblem) -> Result<BvpSolution> {
    p.validate()?;
    let mut values = Vec::with_capacity(p.dim());
    let mut derivs = Vec::with_capacity(p.dim());
    let mut second = Vec::with_capacity(p.dim());
    let (mut worst, mut ratio) = (0.0f64, 0.0f64);
    for d in 0..p.dim() {
        let (a, b) = assemble(p, d);
        let (x, res, pr) = solve_banded(a, b)?;
        if res > RESIDUAL_TOLERANCE {
            return Err(Error::Solver {
                reason: format!("relative residual {res:e} exceeds {RESIDUAL_TOLERANCE:e}"),
                condition: pr,
            });
        }
        worst = worst.max(res);
        ratio = ratio.max(pr);
        let comp = |j: usize| x.iter().skip(j).step_by(4).copied().collect::<Vec<f64>>();
        values.push(comp(0));
        derivs.push(comp(1));
        second.push(comp(2));
    }
    Ok(BvpSolution {
        trajectory: Trajectory { times: p.times(), values, derivs },
        second,
        residual: worst,
        pivot_ratio: ratio,
    })
}

fn rk4(p: &ToyProblem, d: usize, t: f64, dt: f64, y: [f64; 2]) -> [f64; 2] {
    let stiff = p.k + p.q;
    // Steps never straddle a jump, so a piecewise target is read at the step midpoint.
    let target = |s: f64| match p.target {
        Target::Piecewise { .. } => p.target.eval(t + 0.5 * dt, d),
        Target::Sinusoid { .. } => p.target.eval(s, d),
    };
    let f = |s: f64, y: [f64; 2]| [y[1], (p.q * target(s) - p.beta * y[1] - stiff * y[0]) / p.alpha];
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, [y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]]);
    let k3 = f(t + 0.5 * dt, [y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]]);
    let k4 = f(t + dt, [y[0] + dt * k3[0], y[1] + dt * k3[1]]);
    [
        y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrate the limit initial-value problem with classical RK4 on the
/// problem grid, splitting steps at target discontinuities.
pub fn solve_limit_ode(p: &ToyProblem) -> Result<Trajectory> {
    p.validate()?;
    let times = p.times();
    let mut values = Vec::with_capacity(p.dim());
    let mut derivs = Vec::with_capacity(p.dim());
    for d in 0..p.dim() {
        let mut y = [p.w0[d], p.w1[d]];
        let mut w = vec![y[0]];
        let mut v = vec![y[1]];
        for pair in times.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let mut knots = vec![a];
            knots.extend(p.target.breaks_in(a, b));
            knots.push(b);
            for seg in knots.windows(2) {
                y = rk4(p, d, seg[0], seg[1] - seg[0], y);
            }
            if !(y[0].is_finite() && y[1].is_finite()) {
                return Err(Error::Integration { frame: w.len(), what: "limit trajectory diverged" });
            }
            w.push(y[0]);
            v.push(y[1]);
        }
        values.push(w);
        derivs.push(v);
    }
    Ok(Trajectory { times, values, derivs })
}

fn trapezoid_sq(times: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (ca, cb) in a.iter().zip(b) {
        let sq: Vec<f64> = ca.iter().zip(cb).map(|(x, y)| (x - y) * (x - y)).collect();
        for i in 1..times.len() {
            total += 0.5 * (times[i] - times[i - 1]) * (sq[i] + sq[i - 1]);
        }
    }
    total.sqrt()
}

/// `(‖w_a − w_b‖_{L²}, ‖ẇ_a − ẇ_b‖_{L²})` by the trapezoidal rule.
pub fn h1_distance(a: &Trajectory, b: &Trajectory) -> Result<(f64, f64)> {
    if a.times != b.times || a.values.len() != b.values.len() {
        return Err(Error::Dimension("trajectories live on different grids".into()));
    }
    Ok((trapezoid_sq(&a.times, &a.values, &b.values), trapezoid_sq(&a.times, &a.derivs, &b.derivs)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub l2_values: f64,
    pub l2_derivs: f64,
    pub residual: f64,
}

/// Distances between `w_ε` and the limit trajectory for each ε.
pub fn epsilon_sweep(p: &ToyProblem, eps: &[f64]) -> Result<Vec<SweepRow>> {
    let limit = solve_limit_ode(p)?;
    eps.iter()
        .map(|&e| {
            let sol = solve_eps_bvp(&p.with_eps(e))?;
            let (l2_values, l2_derivs) = h1_distance(&sol.trajectory, &limit)?;
            Ok(SweepRow { eps: e, l2_values, l2_derivs, residual: sol.residual })
        })
        .collect()
}

/// Pass/fail summary of one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepVerdict {
    pub monotone: bool,
    pub value_ratio: f64,
    pub deriv_ratio: f64,
    pub max_residual: f64,
}

impl SweepVerdict {
    pub fn of(rows: &[SweepRow]) -> Self {
        let dec = |f: fn(&SweepRow) -> f64| rows.windows(2).all(|w| f(&w[1]) < f(&w[0]));
        let ratio = |f: fn(&SweepRow) -> f64| match (rows.first(), rows.last()) {
            (Some(a), Some(b)) if f(a) > 0.0 => f(b) / f(a),
            _ => f64::NAN,
        };
        Self {
            monotone: dec(|r| r.l2_values) && dec(|r| r.l2_derivs),
            value_ratio: ratio(|r| r.l2_values),
            deriv_ratio: ratio(|r| r.l2_derivs),
            max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
        }
    }

    /// Monotone, final distances below `ratio` of the initial ones, residual in tolerance.
    pub fn passes(&self, ratio: f64) -> bool {
        self.monotone
            && self.value_ratio < ratio
            && self.deriv_ratio < ratio
            && self.max_residual < RESIDUAL_TOLERANCE
    }
}

pub const DEFAULT_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Named quadratic problems on unit-scale horizons.
pub fn toy_problems() -> Vec<(&'static str, ToyProblem)> {
    let base = ToyProblem {
        alpha: 1.0,
        beta: 0.0,
        k: 0.0,
        q: 1.0,
        eps: DEFAULT_EPS[0],
        horizon: 1.0,
        w0: vec![0.0],
        w1: vec![0.0],
        target: Target::constant(vec![1.0]),
        n: 4000,
    };
    vec![
        ("one-minus-cos", base.clone()),
        ("damped", ToyProblem { beta: 0.1, ..base.clone() }),
        ("damped-k", ToyProblem { beta: 0.3, k: 0.2, w1: vec![0.5], ..base.clone() }),
        (
            "piecewise-2d",
            ToyProblem {
                beta: 0.2,
                horizon: 0.5,
                w0: vec![0.0, 0.5],
                w1: vec![0.0, 0.0],
                target: Target::Piecewise {
                    starts: vec![0.0, 0.25],
                    values: vec![vec![1.0, -0.5], vec![-0.5, 1.0]],
                },
                n: 2000,
                ..base.clone()
            },
        ),
        (
            "sinusoid-3d",
            ToyProblem {
                q: 2.0,
                horizon: 0.5,
                w0: vec![0.0, 0.2, -0.3],
                w1: vec![0.1, 0.0, 0.0],
                target: Target::Sinusoid {
                    offset: vec![0.0, 0.5, -0.5],
                    amplitude: vec![1.0, 0.5, 0.25],
                    omega: 3.0,
                    phase: vec![0.0, 1.0, 2.0],
                },
                n: 2000,
                ..base
            },
        ),
    ]
}
