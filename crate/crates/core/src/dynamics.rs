//! Equations of motion in modified equinoctial elements.
//!
//! States are ordered `[p, f, g, h, k, L, m]` in the time domain and
//! `[p, f, g, h, k, t, m]` when the true longitude is the independent
//! variable. All quantities are in canonical units.

use num_dual::DualNum;
use thiserror::Error;

use crate::elements::EquinoctialElements;
use crate::ode::{integrate, OdeError, OdeOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("mass {0} must be positive")]
    Mass(f64),
    #[error("semi-parameter {0} must be positive")]
    SemiParameter(f64),
    #[error("w = {0} must be positive")]
    Degenerate(f64),
    #[error("dL/dt = {0} is not positive; longitude cannot be the independent variable")]
    Retrograde(f64),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

/// Gravitational parameter and exhaust velocity `g0·Isp`, both scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    pub mu: f64,
    pub exhaust_velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacecraftState {
    pub mee: EquinoctialElements,
    pub mass: f64,
}

impl SpacecraftState {
    pub fn to_array(&self) -> [f64; 7] {
        let m = &self.mee;
        [m.p, m.f, m.g, m.h, m.k, m.l, self.mass]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { mee: EquinoctialElements::from_slice(&v[..6]), mass: v[6] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub thrust: f64,
    /// Thrust direction `(u_r, u_t, u_n)` in the RTN frame.
    pub dir: [f64; 3],
}

impl ControlInput {
    pub fn coast() -> Self {
        Self { thrust: 0.0, dir: [0.0, 1.0, 0.0] }
    }
}

/// Thrust acceleration in the RTN frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub radial: f64,
    pub transverse: f64,
    pub normal: f64,
}

pub fn perturbation(state: &SpacecraftState, ctrl: &ControlInput) -> Result<Perturbation, DynamicsError> {
    if !(state.mass > 0.0) {
        return Err(DynamicsError::Mass(state.mass));
    }
    let s = ctrl.thrust / state.mass;
    Ok(Perturbation { radial: s * ctrl.dir[0], transverse: s * ctrl.dir[1], normal: s * ctrl.dir[2] })
}

/// Time derivatives of `[p, f, g, h, k, L, m]` for a thrust magnitude and
/// RTN direction. Generic so the same expressions serve values and
/// derivatives.
pub fn mee_rates<D: DualNum<Primitive = f64> + Copy>(x: &[D], thrust: D, dir: [D; 3], params: &DynamicsParams) -> [D; 7] {
    let (p, f, g, h, k, l, m) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);
    let (sl, cl) = l.sin_cos();
    let w = f * cl + g * sl + 1.0;
    let q2 = h * h + k * k + 1.0;
    let sp = (p / params.mu).sqrt();
    let acc = thrust / m;
    let (dr, dt, dn) = (acc * dir[0], acc * dir[1], acc * dir[2]);
    let hk = h * sl - k * cl;
    let w_inv = w.recip();
    [
        sp * p * 2.0 * w_inv * dt,
        sp * (sl * dr + ((w + 1.0) * cl + f) * w_inv * dt - g * w_inv * hk * dn),
        sp * (-cl * dr + ((w + 1.0) * sl + g) * w_inv * dt + f * w_inv * hk * dn),
        sp * q2 * 0.5 * w_inv * cl * dn,
        sp * q2 * 0.5 * w_inv * sl * dn,
        (p * params.mu).sqrt() * (w / p).powi(2) + sp * w_inv * hk * dn,
        -thrust / params.exhaust_velocity,
    ]
}

fn check_state(state: &SpacecraftState) -> Result<(), DynamicsError> {
    if !(state.mass > 0.0) {
        return Err(DynamicsError::Mass(state.mass));
    }
    if !(state.mee.p > 0.0) {
        return Err(DynamicsError::SemiParameter(state.mee.p));
    }
    let w = state.mee.w();
    if !(w > 0.0) {
        return Err(DynamicsError::Degenerate(w));
    }
    Ok(())
}

/// `d[p, f, g, h, k, L, m]/dt`.
pub fn rhs_time(
    state: &SpacecraftState,
    ctrl: &ControlInput,
    params: &DynamicsParams,
) -> Result<[f64; 7], DynamicsError> {
    check_state(state)?;
    Ok(mee_rates(&state.to_array(), ctrl.thrust, ctrl.dir, params))
}

/// `d[p, f, g, h, k, t, m]/dL`.
pub fn rhs_longitude(
    state: &SpacecraftState,
    ctrl: &ControlInput,
    params: &DynamicsParams,
) -> Result<[f64; 7], DynamicsError> {
    let d = rhs_time(state, ctrl, params)?;
    let dl = d[5];
    if !(dl > 0.0) {
        return Err(DynamicsError::Retrograde(dl));
    }
    let dt_dl = 1.0 / dl;
    Ok([d[0] * dt_dl, d[1] * dt_dl, d[2] * dt_dl, d[3] * dt_dl, d[4] * dt_dl, dt_dl, d[6] * dt_dl])
}

/// Unit vector along the inertial velocity, resolved in RTN.
pub fn velocity_direction(mee: &EquinoctialElements) -> [f64; 3] {
    // In RTN the velocity is sqrt(μ/p)·(f sin L − g cos L, w, 0).
    let (sl, cl) = mee.l.sin_cos();
    let vr = mee.f * sl - mee.g * cl;
    let vt = mee.w();
    let n = vr.hypot(vt);
    [vr / n, vt / n, 0.0]
}

/// One propagated sample: time, state and the control applied there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: SpacecraftState,
    pub control: ControlInput,
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub samples: Vec<Sample>,
    /// Whether the stop event fired.
    pub event: bool,
}

/// Integrates in time from `t0` to `t_end` under a state-feedback control
/// law, optionally stopping when `event(state)` changes sign.
pub fn propagate_time<C, E>(
    state0: &SpacecraftState,
    t0: f64,
    t_end: f64,
    params: &DynamicsParams,
    control: C,
    event: Option<E>,
    opts: &OdeOptions,
) -> Result<Propagation, DynamicsError>
where
    C: Fn(f64, &SpacecraftState) -> ControlInput,
    E: Fn(&SpacecraftState) -> f64,
{
    check_state(state0)?;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let s = SpacecraftState::from_slice(y);
        let u = control(t, &s);
        dy.copy_from_slice(&mee_rates(y, u.thrust, u.dir, params));
    };
    let ev = event.as_ref().map(|e| move |_: f64, y: &[f64]| e(&SpacecraftState::from_slice(y)));
    let sol = integrate(rhs, t0, &state0.to_array(), t_end, opts, ev)?;
    let samples = sol
        .t
        .iter()
        .zip(&sol.y)
        .map(|(&t, y)| {
            let state = SpacecraftState::from_slice(y);
            Sample { t, state, control: control(t, &state) }
        })
        .collect();
    Ok(Propagation { samples, event: sol.event })
}

/// Integrates with the true longitude as independent variable from the
/// state's own `L` to `l_end`. Time is carried as a state starting at `t0`.
pub fn propagate_longitude<C, E>(
    state0: &SpacecraftState,
    t0: f64,
    l_end: f64,
    params: &DynamicsParams,
    control: C,
    event: Option<E>,
    opts: &OdeOptions,
) -> Result<Propagation, DynamicsError>
where
    C: Fn(f64, &SpacecraftState) -> ControlInput,
    E: Fn(&SpacecraftState) -> f64,
{
    check_state(state0)?;
    let unpack = |l: f64, y: &[f64]| -> (f64, SpacecraftState) {
        let mee = EquinoctialElements { p: y[0], f: y[1], g: y[2], h: y[3], k: y[4], l };
        (y[5], SpacecraftState { mee, mass: y[6] })
    };
    let rhs = |l: f64, y: &[f64], dy: &mut [f64]| {
        let (t, s) = unpack(l, y);
        let u = control(t, &s);
        let mut x = s.to_array();
        x[5] = l;
        let d = mee_rates(&x, u.thrust, u.dir, params);
        let dt_dl = 1.0 / d[5];
        for j in 0..5 {
            dy[j] = d[j] * dt_dl;
        }
        dy[5] = dt_dl;
        dy[6] = d[6] * dt_dl;
    };
    let ev = event.as_ref().map(|e| move |l: f64, y: &[f64]| e(&unpack(l, y).1));
    let m = state0.mee;
    let y0 = [m.p, m.f, m.g, m.h, m.k, t0, state0.mass];
    let sol = integrate(rhs, m.l, &y0, l_end, opts, ev)?;
    let samples = sol
        .t
        .iter()
        .zip(&sol.y)
        .map(|(&l, y)| {
            let (t, state) = unpack(l, y);
            Sample { t, state, control: control(t, &state) }
        })
        .collect();
    Ok(Propagation { samples, event: sol.event })
}
