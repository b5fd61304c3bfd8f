//! Temporally local mutual-information potential.
//!
//! Per frame, `U = λ_c H(Y|X) − λ_e H(Y) + λ_s |ṡ − P̄|²`, with entropies in
//! base `m` so both lie in `[0, 1]`. The output entropy is taken on `P̄`
//! (PLA), on the running average `ν` (AVG), or on the auxiliary variable
//! `s` (VAR). History (`ν(t')`, `s(t')`) is held constant when
//! differentiating, so gradients flow only through the current frame.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::DensitySupport;
use crate::error::{Error, Result};
use crate::network::{backward, forward, OutputView, ParamVector};
use crate::stream::Frame;

/// Floor applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "PLA")]
    Pla,
    #[serde(rename = "VAR")]
    Var,
    #[serde(rename = "AVG")]
    Avg,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pla => "PLA",
            Self::Var => "VAR",
            Self::Avg => "AVG",
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PLA" => Ok(Self::Pla),
            "VAR" => Ok(Self::Var),
            "AVG" => Ok(Self::Avg),
            _ => Err(Error::Config(format!("unknown criterion '{s}'"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyParams {
    pub lambda_c: f64,
    pub lambda_e: f64,
    pub lambda_s: f64,
    /// History weight of the AVG moving average.
    pub zeta_s: f64,
    /// Euler step of the VAR auxiliary variable.
    pub dt_s: f64,
}

impl Default for EntropyParams {
    fn default() -> Self {
        Self { lambda_c: 100.0, lambda_e: 400.0, lambda_s: 100.0, zeta_s: 0.05, dt_s: 1.0 }
    }
}

impl EntropyParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.lambda_c >= 0.0, "objective.lambda_c must be >= 0"),
            (self.lambda_e >= 0.0, "objective.lambda_e must be >= 0"),
            (self.lambda_s >= 0.0, "objective.lambda_s must be >= 0"),
            (self.zeta_s > 0.0 && self.zeta_s < 1.0, "objective.zeta_s must be in (0,1)"),
            (self.dt_s > 0.0 && self.dt_s.is_finite(), "objective.dt_s must be > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }
}

/// Temporal-locality state, updated once per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyState {
    pub criterion: Criterion,
    pub params: EntropyParams,
    /// AVG running average ν.
    pub nu: Vec<f64>,
    /// VAR auxiliary variable s(t).
    pub s: Vec<f64>,
    /// s(t') from the previous frame.
    pub s_prev: Vec<f64>,
}

impl EntropyState {
    /// Fresh state with ν and s at the uniform distribution.
    pub fn new(criterion: Criterion, params: EntropyParams, m: usize) -> Result<Self> {
        params.validate()?;
        let u = vec![1.0 / m as f64; m];
        Ok(Self { criterion, params, nu: u.clone(), s: u.clone(), s_prev: u })
    }

    pub fn m(&self) -> usize {
        self.nu.len()
    }
}

/// Per-frame potential and its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePotential {
    pub h_cond: f64,
    pub h_out: f64,
    pub penalty: f64,
    pub u: f64,
}

fn xlogx(p: f64, floor: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * p.max(floor).ln()
    }
}

/// Base-`m` entropy with an explicit log floor.
pub fn entropy_with_floor(q: &[f64], floor: f64) -> f64 {
    let m = q.len() as f64;
    -q.iter().map(|&p| xlogx(p, floor)).sum::<f64>() / m.ln()
}

/// `H(q) = −Σ q_j log_m q_j`.
pub fn output_entropy(q: &[f64]) -> f64 {
    entropy_with_floor(q, LOG_FLOOR)
}

/// `∂H/∂q_j` in base `m`.
fn entropy_grad(q: &[f64], out: &mut [f64]) {
    let ln_m = (q.len() as f64).ln();
    for (g, &p) in out.iter_mut().zip(q) {
        let d = if p > LOG_FLOOR { p.ln() + 1.0 } else { LOG_FLOOR.ln() };
        *g = -d / ln_m;
    }
}

fn lookup<'a>(outputs: &OutputView<'a>, x: usize, y: usize) -> Result<&'a [f64]> {
    outputs
        .at(x, y)
        .ok_or_else(|| Error::Dimension(format!("support pixel ({x},{y}) has no output")))
}

/// `P̄_j = Σ_x μ(x) p_j(x)`.
pub fn avg_activation(outputs: &OutputView<'_>, support: &DensitySupport) -> Result<Vec<f64>> {
    let mut pbar = vec![0.0; outputs.m];
    for &(x, y, wt) in &support.entries {
        for (a, &p) in pbar.iter_mut().zip(lookup(outputs, x, y)?) {
            *a += wt * p;
        }
    }
    Ok(pbar)
}

/// `−Σ_x μ(x) Σ_j p_j(x) log_m p_j(x)`.
pub fn conditional_entropy(outputs: &OutputView<'_>, support: &DensitySupport) -> Result<f64> {
    let mut h = 0.0;
    for &(x, y, wt) in &support.entries {
        h += wt * output_entropy(lookup(outputs, x, y)?);
    }
    Ok(h)
}

/// Advance the temporal state with the current frame's `P̄`.
pub fn update_entropy_state(state: &mut EntropyState, pbar: &[f64]) {
    let p = state.params;
    match state.criterion {
        Criterion::Pla => {}
        Criterion::Avg => {
            for (n, &a) in state.nu.iter_mut().zip(pbar) {
                *n = p.zeta_s * *n + (1.0 - p.zeta_s) * a;
            }
        }
        Criterion::Var => {
            let next: Vec<f64> = state.s.iter().zip(pbar).map(|(s, a)| s + p.dt_s * a).collect();
            let total: f64 = next.iter().sum();
            state.s_prev = std::mem::replace(&mut state.s, next.into_iter().map(|v| v / total).collect());
        }
    }
}

/// Potential of one frame, its gradient with respect to the per-pixel
/// outputs (`outputs.probs` layout), the frame's `P̄` and the advanced state.
pub struct OutputPotential {
    pub potential: FramePotential,
    pub grad_probs: Vec<f64>,
    pub pbar: Vec<f64>,
    pub next_state: EntropyState,
}

fn check_finite(v: f64, term: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical { term })
    }
}

pub fn potential_from_outputs(
    outputs: &OutputView<'_>,
    support: &DensitySupport,
    state: &EntropyState,
) -> Result<OutputPotential> {
    if support.is_empty() {
        return Err(Error::Dimension("empty density support".into()));
    }
    let m = outputs.m;
    if state.m() != m {
        return Err(Error::Dimension(format!("entropy state has {} symbols, network {m}", state.m())));
    }
    let p = state.params;
    let pbar = avg_activation(outputs, support)?;
    let h_cond = check_finite(conditional_entropy(outputs, support)?, "conditional entropy")?;

    let mut next = state.clone();
    update_entropy_state(&mut next, &pbar);

    // dU/dP̄ through the output-entropy and penalty paths.
    let mut dh = vec![0.0; m];
    let mut g_pbar = vec![0.0; m];
    let (h_out, penalty) = match state.criterion {
        Criterion::Pla => {
            entropy_grad(&pbar, &mut dh);
            for (g, d) in g_pbar.iter_mut().zip(&dh) {
                *g = -p.lambda_e * d;
            }
            (output_entropy(&pbar), 0.0)
        }
        Criterion::Avg => {
            entropy_grad(&next.nu, &mut dh);
            for (g, d) in g_pbar.iter_mut().zip(&dh) {
                *g = -p.lambda_e * (1.0 - p.zeta_s) * d;
            }
            (output_entropy(&next.nu), 0.0)
        }
        Criterion::Var => {
            let s_new = &next.s;
            let residual: Vec<f64> = s_new
                .iter()
                .zip(&state.s)
                .zip(&pbar)
                .map(|((sn, so), a)| (sn - so) / p.dt_s - a)
                .collect();
            let penalty = residual.iter().map(|r| r * r).sum::<f64>();
            entropy_grad(s_new, &mut dh);
            let g_s: Vec<f64> = dh
                .iter()
                .zip(&residual)
                .map(|(d, r)| -p.lambda_e * d + p.lambda_s * 2.0 * r / p.dt_s)
                .collect();
            // s_new = x / Σx with x = s + dt_s P̄.
            let total: f64 = state.s.iter().zip(&pbar).map(|(s, a)| s + p.dt_s * a).sum();
            let proj: f64 = g_s.iter().zip(s_new).map(|(g, s)| g * s).sum();
            for j in 0..m {
                g_pbar[j] = p.dt_s * (g_s[j] - proj) / total - 2.0 * p.lambda_s * residual[j];
            }
            (output_entropy(s_new), penalty)
        }
    };
    let h_out = check_finite(h_out, "output entropy")?;
    let penalty = check_finite(penalty, "VAR penalty")?;
    let u = check_finite(p.lambda_c * h_cond - p.lambda_e * h_out + p.lambda_s * penalty, "potential")?;

    let mut grad_probs = vec![0.0; outputs.probs.len()];
    for &(x, y, wt) in &support.entries {
        let i = outputs.index(x, y).expect("checked by avg_activation");
        let px = &outputs.probs[i * m..(i + 1) * m];
        entropy_grad(px, &mut dh);
        for j in 0..m {
            grad_probs[i * m + j] += wt * (p.lambda_c * dh[j] + g_pbar[j]);
        }
    }

    Ok(OutputPotential {
        potential: FramePotential { h_cond, h_out, penalty, u },
        grad_probs,
        pbar,
        next_state: next,
    })
}

/// Result of one training-frame evaluation.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub potential: FramePotential,
    /// `∇U` in the parameter layout.
    pub grad: Vec<f64>,
    pub pbar: Vec<f64>,
}

/// Potential only, leaving `state` untouched; returns the state the frame would produce.
pub fn frame_potential(
    params: &ParamVector,
    frame: &Frame,
    support: &DensitySupport,
    state: &EntropyState,
) -> Result<(FramePotential, EntropyState)> {
    let cache = forward(params, frame, support.bounds())?;
    let out = potential_from_outputs(&cache.outputs(), support, state)?;
    Ok((out.potential, out.next_state))
}

/// `U`, `∇U` and `P̄` for one frame; advances `state` exactly once.
pub fn frame_potential_and_grad(
    params: &ParamVector,
    frame: &Frame,
    support: &DensitySupport,
    state: &mut EntropyState,
) -> Result<FrameOutcome> {
    let cache = forward(params, frame, support.bounds())?;
    let out = potential_from_outputs(&cache.outputs(), support, state)?;
    let grad = backward(params, &cache, &out.grad_probs)?;
    *state = out.next_state;
    Ok(FrameOutcome { potential: out.potential, grad, pbar: out.pbar })
}

/// Largest per-coordinate relative error `|a−n| / max(|a|, |n|, 1e-3·‖a‖∞)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Compare `∇U` with central differences of `U` on the given coordinates.
pub fn gradient_check(
    params: &ParamVector,
    frame: &Frame,
    support: &DensitySupport,
    state: &EntropyState,
    coords: &[usize],
    step: f64,
) -> Result<f64> {
    let mut st = state.clone();
    let outcome = frame_potential_and_grad(params, frame, support, &mut st)?;
    let mut probe = params.clone();
    let mut numeric = Vec::with_capacity(coords.len());
    for &i in coords {
        let base = probe.values[i];
        probe.values[i] = base + step;
        let up = frame_potential(&probe, frame, support, state)?.0.u;
        probe.values[i] = base - step;
        let down = frame_potential(&probe, frame, support, state)?.0.u;
        probe.values[i] = base;
        numeric.push((up - down) / (2.0 * step));
    }
    let analytic: Vec<f64> = coords.iter().map(|&i| outcome.grad[i]).collect();
    Ok(max_relative_error(&analytic, &numeric))
}
