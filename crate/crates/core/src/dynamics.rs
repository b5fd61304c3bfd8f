//! Second-order weight dynamics `α ẅ + β ẇ + k w + ∇U = 0`.
//!
//! Integrated with semi-implicit Euler, velocity first:
//! `v ← v + dt (−β v − k w − ∇U) / α`, then `w ← w + dt v`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub dt: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self { alpha: 0.01, beta: 0.1, k: 1e-8, dt: 0.05 }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.k, self.dt].iter().all(|v| v.is_finite());
        if !finite || self.alpha <= 0.0 || self.beta < 0.0 || self.k < 0.0 || self.dt <= 0.0 {
            return Err(Error::Config(format!(
                "dynamics needs alpha > 0, beta >= 0, k >= 0, dt > 0 (got {self:?})"
            )));
        }
        if self.beta > 0.0 && self.dt >= 2.0 * self.alpha / self.beta {
            return Err(Error::Config(format!(
                "dynamics.dt = {} violates dt < 2 alpha / beta = {}",
                self.dt,
                2.0 * self.alpha / self.beta
            )));
        }
        Ok(())
    }

    /// Per-step velocity damping factor `1 − dt β / α`.
    pub fn damping_factor(&self) -> f64 {
        1.0 - self.dt * self.beta / self.alpha
    }

    /// Largest curvature `K` of a frozen quadratic (including `k`) for which
    /// `½α|v|² + ½k|w|² + U(w)` cannot increase over one step.
    ///
    /// One step changes that energy, per eigenmode, by
    /// `α[−½v² + (1−r) v v' + ½(s−1) v'²]` with `r = dtβ/α`, `s = dt²K/α`,
    /// which is nonpositive for all `(v, v')` iff `s ≤ r(2−r)`.
    pub fn energy_curvature_bound(&self) -> f64 {
        let r = self.dt * self.beta / self.alpha;
        r * (2.0 - r) * self.alpha / (self.dt * self.dt)
    }
}

/// `(w, ẇ)` together with the integrator coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsState {
    pub w: ParamVector,
    pub v: Vec<f64>,
    pub params: DynamicsParams,
    /// Frame index of the next step, used in error reports.
    pub frame: usize,
}

impl DynamicsState {
    /// Start at `w` with zero velocity.
    pub fn new(w: ParamVector, params: DynamicsParams) -> Result<Self> {
        let n = w.n();
        Self::with_velocity(w, vec![0.0; n], params, 0)
    }

    pub fn with_velocity(w: ParamVector, v: Vec<f64>, params: DynamicsParams, frame: usize) -> Result<Self> {
        params.validate()?;
        if v.len() != w.n() {
            return Err(Error::Dimension(format!("velocity of length {} for n = {}", v.len(), w.n())));
        }
        if !w.values.iter().chain(&v).all(|x| x.is_finite()) {
            return Err(Error::Integration { frame, what: "non-finite initial state" });
        }
        Ok(Self { w, v, params, frame })
    }
}

/// Advance one step under `grad` (∇U at the current `w`).
pub fn cal_step(state: &mut DynamicsState, grad: &[f64]) -> Result<()> {
    let n = state.w.n();
    if grad.len() != n {
        return Err(Error::Dimension(format!("gradient of length {} for n = {n}", grad.len())));
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::Integration { frame: state.frame, what: "non-finite gradient" });
    }
    let DynamicsParams { alpha, beta, k, dt } = state.params;
    let scale = dt / alpha;
    let mut finite = true;
    for ((w, v), g) in state.w.values.iter_mut().zip(state.v.iter_mut()).zip(grad) {
        *v += scale * (-beta * *v - k * *w - g);
        *w += dt * *v;
        finite &= w.is_finite() && v.is_finite();
    }
    if !finite {
        return Err(Error::Integration { frame: state.frame, what: "weights or velocity diverged" });
    }
    state.frame += 1;
    Ok(())
}

/// `max_i |k w_i + ∇U_i|`.
pub fn stationary_residual(state: &DynamicsState, grad: &[f64]) -> f64 {
    state
        .w
        .values
        .iter()
        .zip(grad)
        .map(|(w, g)| (state.params.k * w + g).abs())
        .fold(0.0, f64::max)
}
