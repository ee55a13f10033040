//! Small optimal control problems with known solutions, used to validate
//! the transcription and the structure-detection loop.

use crate::collocation::{Bounds, Ocp, Regime, Scalar};


/// `ẋ = x`, `x(0) = 1` on `[0, 1]` with no objective. The exact solution
/// is `eᵗ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExponentialGrowth;

impl Ocp for ExponentialGrowth {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        0
    }
    fn event_dim(&self) -> usize {
        1
    }
    fn dynamics<D: Scalar>(&self, x: &[D], _u: &[D], out: &mut [D]) {
        out[0] = x[0];
    }
    fn events<D: Scalar>(&self, _t0: D, x0: &[D], _tf: D, _xf: &[D], out: &mut [D]) {
        out[0] = x0[0];
    }
    fn objective<D: Scalar>(&self, t0: D, _x0: &[D], _tf: D, _xf: &[D]) -> D {
        t0 * 0.0
    }
    fn state_bounds(&self) -> Bounds {
        Bounds::new(vec![-10.0], vec![10.0])
    }
    fn control_bounds(&self, _regime: Regime) -> Bounds {
        Bounds::new(vec![], vec![])
    }
    fn event_bounds(&self) -> Bounds {
        Bounds::fixed(vec![1.0])
    }
    fn initial_time_bounds(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
    fn final_time_bounds(&self) -> (f64, f64) {
        (1.0, 1.0)
    }
}

/// Minimum-fuel double integrator: drive `ẍ = T·d`, `0 ≤ T ≤ 1`, `d² = 1`,
/// from rest at `x = 1` to rest at the origin in fixed time `horizon > 2`,
/// minimizing `∫ T dt`.
///
/// States `[x, v, fuel]`, controls `[T, d]`. The optimum is burn, coast,
/// burn with both burns of length [`DoubleIntegratorMinFuel::burn_time`].
#[derive(Debug, Clone, Copy)]
pub struct DoubleIntegratorMinFuel {
    pub horizon: f64,
}

impl DoubleIntegratorMinFuel {
    /// Length of each burn: the smaller root of `t² − horizon·t + 1 = 0`.
    pub fn burn_time(&self) -> f64 {
        let tf = self.horizon;
        0.5 * (tf - (tf * tf - 4.0).sqrt())
    }

    pub fn switch_times(&self) -> [f64; 2] {
        let t1 = self.burn_time();
        [t1, self.horizon - t1]
    }

    pub fn minimum_fuel(&self) -> f64 {
        2.0 * self.burn_time()
    }
}

impl Ocp for DoubleIntegratorMinFuel {
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn path_dim(&self) -> usize {
        1
    }
    fn event_dim(&self) -> usize {
        2
    }
    fn dynamics<D: Scalar>(&self, x: &[D], u: &[D], out: &mut [D]) {
        out[0] = x[1];
        out[1] = u[0] * u[1];
        out[2] = u[0];
    }
    fn path<D: Scalar>(&self, _x: &[D], u: &[D], out: &mut [D]) {
        out[0] = u[1] * u[1];
    }
    fn events<D: Scalar>(&self, _t0: D, _x0: &[D], _tf: D, xf: &[D], out: &mut [D]) {
        out[0] = xf[0];
        out[1] = xf[1];
    }
    fn objective<D: Scalar>(&self, _t0: D, _x0: &[D], _tf: D, xf: &[D]) -> D {
        xf[2]
    }
    fn state_bounds(&self) -> Bounds {
        Bounds::new(vec![-10.0, -10.0, 0.0], vec![10.0, 10.0, 10.0])
    }
    fn initial_state_bounds(&self) -> Bounds {
        Bounds::fixed(vec![1.0, 0.0, 0.0])
    }
    fn control_bounds(&self, regime: Regime) -> Bounds {
        match regime {
            Regime::Max => Bounds::new(vec![1.0, -1.1], vec![1.0, 1.1]),
            Regime::Coast => Bounds::fixed(vec![0.0, 1.0]),
            Regime::Unclassified => Bounds::new(vec![0.0, -1.1], vec![1.0, 1.1]),
        }
    }
    fn path_bounds(&self) -> Bounds {
        Bounds::fixed(vec![1.0])
    }
    fn event_bounds(&self) -> Bounds {
        Bounds::fixed(vec![0.0, 0.0])
    }
    fn initial_time_bounds(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
    fn final_time_bounds(&self) -> (f64, f64) {
        (self.horizon, self.horizon)
    }
    fn throttle(&self) -> Option<(usize, f64)> {
        Some((0, 1.0))
    }
}

