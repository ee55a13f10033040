//! Adaptive Dormand-Prince 5(4) integration with terminal events.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("step limit reached at t = {0}")]
    StepLimit(f64),
    #[error("non-finite derivative at t = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Event location accuracy in the event function.
    pub event_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 200_000, event_tol: 1e-10 }
    }
}

impl OdeOptions {
    pub fn with_tolerance(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }
}

/// Accepted steps, including the initial point. `event` is set when the
/// integration stopped on the event function.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub event: bool,
}

impl OdeSolution {
    pub fn last(&self) -> (f64, &[f64]) {
        (*self.t.last().unwrap(), self.y.last().unwrap())
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper<F> {
    f: F,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Stepper<F> {
    fn new(f: F, n: usize) -> Self {
        Self { f, k: vec![vec![0.0; n]; 7], tmp: vec![0.0; n] }
    }

    /// One step from (t, y) with derivative `dy0`. Writes the new state
    /// into `out` and returns the weighted error norm.
    fn step(&mut self, t: f64, y: &[f64], dy0: &[f64], h: f64, out: &mut [f64], opts: &OdeOptions) -> f64 {
        let n = y.len();
        self.k[0].copy_from_slice(dy0);
        for s in 1..7 {
            for j in 0..n {
                let mut acc = 0.0;
                for (r, kr) in self.k.iter().enumerate().take(s) {
                    acc += A[s][r] * kr[j];
                }
                self.tmp[j] = y[j] + h * acc;
            }
            let (head, tail) = self.k.split_at_mut(s);
            let _ = head;
            (self.f)(t + C[s] * h, &self.tmp, &mut tail[0]);
        }
        // The seventh stage is evaluated at the fifth-order solution.
        out.copy_from_slice(&self.tmp);
        let mut err = 0.0;
        for j in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * self.k[s][j];
            }
            let sc = opts.atol + opts.rtol * y[j].abs().max(out[j].abs());
            err += (h * e / sc).powi(2);
        }
        (err / n as f64).sqrt()
    }
}

/// Integrates `y' = f(t, y)` from `t0` toward `t_end` (either direction).
/// If `event` is given the integration stops at the first sign change of
/// `event(t, y)`, located to `opts.event_tol`.
pub fn integrate<F, G>(
    f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut event: Option<G>,
) -> Result<OdeSolution, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &[f64]) -> f64,
{
    let n = y0.len();
    let mut st = Stepper::new(f, n);
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut dy = vec![0.0; n];
    (st.f)(t, &y, &mut dy);
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite(t));
    }
    let mut sol = OdeSolution { t: vec![t], y: vec![y.clone()], event: false };
    if t0 == t_end {
        return Ok(sol);
    }
    let mut g_prev = event.as_mut().map(|g| g(t, &y));

    let span = (t_end - t0).abs();
    let dnorm = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut h = if dnorm > 0.0 { (0.01 * (ynorm + opts.atol) / dnorm).min(span) } else { span * 1e-3 };
    h = h.max(span * 1e-12) * dir;

    let mut y_new = vec![0.0; n];
    let mut dy_new = vec![0.0; n];
    for _ in 0..opts.max_steps {
        if (t_end - t) * dir <= 0.0 {
            return Ok(sol);
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        let err = st.step(t, &y, &dy, h, &mut y_new, opts);
        if !err.is_finite() {
            h *= 0.25;
            if h.abs() < 1e-14 * t.abs().max(span) {
                return Err(OdeError::StepUnderflow(t));
            }
            continue;
        }
        if err <= 1.0 {
            let t_new = t + h;
            (st.f)(t_new, &y_new, &mut dy_new);
            if dy_new.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite(t_new));
            }
            if let (Some(g), Some(gp)) = (event.as_mut(), g_prev) {
                let gn = g(t_new, &y_new);
                if gp == 0.0 || gp.signum() != gn.signum() {
                    let (te, ye) = locate_event(&mut st, g, t, &y, &dy, gp, h, opts);
                    sol.t.push(te);
                    sol.y.push(ye);
                    sol.event = true;
                    return Ok(sol);
                }
                g_prev = Some(gn);
            }
            t = t_new;
            y.copy_from_slice(&y_new);
            dy.copy_from_slice(&dy_new);
            sol.t.push(t);
            sol.y.push(y.clone());
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
        if h.abs() < 1e-14 * t.abs().max(span) {
            return Err(OdeError::StepUnderflow(t));
        }
    }
    Err(OdeError::StepLimit(t))
}

/// Regula falsi (Illinois) on the step length, re-stepping from the start of
/// the bracketing step so the located state carries full step accuracy.
#[allow(clippy::too_many_arguments)]
fn locate_event<F, G>(
    st: &mut Stepper<F>,
    g: &mut G,
    t: f64,
    y: &[f64],
    dy: &[f64],
    g0: f64,
    h: f64,
    opts: &OdeOptions,
) -> (f64, Vec<f64>)
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &[f64]) -> f64,
{
    let mut out = vec![0.0; y.len()];
    if g0 == 0.0 {
        return (t, y.to_vec());
    }
    let mut a = 0.0;
    let mut ga = g0;
    let mut b = h;
    st.step(t, y, dy, b, &mut out, opts);
    let mut gb = g(t + b, &out);
    let mut best = (t + b, out.clone(), gb.abs());
    let mut side = 0i32;
    for _ in 0..200 {
        let s = if gb != ga { b - gb * (b - a) / (gb - ga) } else { 0.5 * (a + b) };
        let s = if (s - a) * (s - b) < 0.0 { s } else { 0.5 * (a + b) };
        st.step(t, y, dy, s, &mut out, opts);
        let gs = g(t + s, &out);
        if gs.abs() < best.2 {
            best = (t + s, out.clone(), gs.abs());
        }
        if gs.abs() <= opts.event_tol * 1e-2 || (b - a).abs() <= 4.0 * f64::EPSILON * (t.abs() + h.abs()) {
            break;
        }
        if gs.signum() == gb.signum() {
            b = s;
            gb = gs;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = s;
            ga = gs;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
    }
    (best.0, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let sol = integrate(
            |_, y: &[f64], d: &mut [f64]| d[0] = y[0],
            0.0,
            &[1.0],
            1.0,
            &OdeOptions::default(),
            None::<fn(f64, &[f64]) -> f64>,
        )
        .unwrap();
        let (t, y) = sol.last();
        assert_eq!(t, 1.0);
        assert!((y[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_event() {
        // x'' = -x from (1, 0): x crosses zero at π/2.
        let sol = integrate(
            |_, y: &[f64], d: &mut [f64]| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            10.0,
            &OdeOptions::default(),
            Some(|_: f64, y: &[f64]| y[0]),
        )
        .unwrap();
        assert!(sol.event);
        let (t, y) = sol.last();
        assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!(y[0].abs() <= 1e-10);
    }

    #[test]
    fn backward_integration() {
        let sol = integrate(
            |_, y: &[f64], d: &mut [f64]| d[0] = -y[0],
            1.0,
            &[1.0],
            0.0,
            &OdeOptions::default(),
            None::<fn(f64, &[f64]) -> f64>,
        )
        .unwrap();
        assert!((sol.last().1[0] - 1f64.exp()).abs() < 1e-9);
    }
}
