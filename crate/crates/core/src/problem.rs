//! The minimum-fuel transfer problem: orbits, thrust case, bounds, events.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collocation::{Bounds, Ocp, Regime, Scalar, Trajectory};
use crate::dynamics::{mee_rates, DynamicsParams, SpacecraftState};
use crate::elements::{coe_to_mee, make_scales, ClassicalElements, EquinoctialElements, PhysicalConstants, ScaleSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown study '{0}' (expected meo, heo or geo)")]
    UnknownStudy(String),
    #[error("case {0} is outside 1..=7")]
    UnknownCase(usize),
    #[error("invalid orbit: {0}")]
    Orbit(String),
    #[error("maximum thrust must be positive, got {0} N")]
    Thrust(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Meo,
    Heo,
    Geo,
}

impl Study {
    pub const ALL: [Study; 3] = [Study::Meo, Study::Heo, Study::Geo];
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Meo => "meo",
            Study::Heo => "heo",
            Study::Geo => "geo",
        })
    }
}

impl FromStr for Study {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "meo" => Ok(Study::Meo),
            "heo" => Ok(Study::Heo),
            "geo" => Ok(Study::Geo),
            _ => Err(ProblemError::UnknownStudy(s.to_string())),
        }
    }
}

/// An orbit in kilometres and degrees. `None` angles are free (or
/// undefined for the orbit's geometry) and left unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub a_km: f64,
    pub e: f64,
    pub i_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raan_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argp_deg: Option<f64>,
}

impl OrbitSpec {
    pub fn classical(&self) -> ClassicalElements {
        ClassicalElements {
            a: self.a_km * 1e3,
            e: self.e,
            i: self.i_deg.to_radians(),
            raan: self.raan_deg.unwrap_or(0.0).to_radians(),
            argp: self.argp_deg.unwrap_or(0.0).to_radians(),
            ta: 0.0,
        }
    }

    fn validate(&self) -> Result<(), ProblemError> {
        if !(self.a_km > 0.0) {
            return Err(ProblemError::Orbit(format!("semi-major axis {} km", self.a_km)));
        }
        if !(0.0..1.0).contains(&self.e) {
            return Err(ProblemError::Orbit(format!("eccentricity {}", self.e)));
        }
        if !(0.0..180.0).contains(&self.i_deg) {
            return Err(ProblemError::Orbit(format!("inclination {} deg", self.i_deg)));
        }
        Ok(())
    }
}

pub const LEO: OrbitSpec = OrbitSpec { a_km: 7003.0, e: 0.0, i_deg: 28.5, raan_deg: Some(0.0), argp_deg: None };
pub const MEO: OrbitSpec = OrbitSpec { a_km: 26560.0, e: 0.0, i_deg: 54.7, raan_deg: None, argp_deg: None };
pub const HEO: OrbitSpec = OrbitSpec { a_km: 26578.0, e: 0.73646, i_deg: 63.435, raan_deg: None, argp_deg: None };
pub const GEO: OrbitSpec = OrbitSpec { a_km: 42287.0, e: 0.0, i_deg: 0.0, raan_deg: None, argp_deg: None };

/// Maximum thrust acceleration `s0` (m/s²) per case.
pub const THRUST_ACCELERATIONS: [f64; 7] = [10.0, 5.0, 1.0, 0.5, 0.1, 0.05, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustCase {
    /// Maximum thrust acceleration at the initial mass, m/s².
    pub s0: f64,
    /// Maximum thrust, N.
    pub t_max_n: f64,
}

/// Human-readable problem definition (km, degrees, newtons).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub name: String,
    #[serde(default)]
    pub constants: PhysicalConstants,
    pub initial: OrbitSpec,
    pub terminal: OrbitSpec,
    pub thrust: ThrustCase,
}

impl TransferConfig {
    pub fn tabulated_case(study: Study, case: usize) -> Result<Self, ProblemError> {
        if !(1..=7).contains(&case) {
            return Err(ProblemError::UnknownCase(case));
        }
        let constants = PhysicalConstants::default();
        let s0 = THRUST_ACCELERATIONS[case - 1];
        let terminal = match study {
            Study::Meo => MEO,
            Study::Heo => HEO,
            Study::Geo => GEO,
        };
        Ok(Self {
            name: format!("{study}-{case}"),
            constants,
            initial: LEO,
            terminal,
            thrust: ThrustCase { s0, t_max_n: s0 * constants.m0 },
        })
    }

    pub fn to_toml(&self) -> Result<String, ProblemError> {
        toml::to_string_pretty(self).map_err(|e| ProblemError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, ProblemError> {
        toml::from_str(text).map_err(|e| ProblemError::Config(e.to_string()))
    }
}

/// Caps on the otherwise free final time and true longitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    /// Upper bound on `t_f`, scaled.
    pub tf_max: f64,
    /// Upper bound on `L`.
    pub l_max: f64,
}

/// A fully scaled transfer problem. Implements [`Ocp`] with states
/// `[p, f, g, h, k, L, m]` and controls `[τ, u_r, u_t, u_n]`, where the
/// thrust is `τ·T_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferProblem {
    pub config: TransferConfig,
    pub scales: ScaleSet,
    pub params: DynamicsParams,
    /// Maximum thrust, scaled.
    pub t_max: f64,
    pub initial: EquinoctialElements,
    /// Terminal elements with the free angles set to zero.
    pub terminal: EquinoctialElements,
    pub horizon: Horizon,
    events: Vec<EventRow>,
}

/// The event relations that stay as constraint rows. Relations with a
/// zero target are enforced through bounds on the elements instead, since
/// `f² + g² = 0` has a vanishing gradient at its solution.
#[derive(Debug, Clone, Copy, PartialEq)]
enum EventRow {
    InitialEccentricity(f64),
    InitialInclination(f64),
    InitialNode(f64),
    FinalEccentricity(f64),
    FinalInclination(f64),
}

pub fn build_problem(study: Study, case: usize) -> Result<TransferProblem, ProblemError> {
    TransferProblem::new(TransferConfig::tabulated_case(study, case)?)
}

/// Unit-vector residual `u_r² + u_t² + u_n² − 1`.
pub fn path_constraint(dir: &[f64; 3]) -> f64 {
    dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2] - 1.0
}

/// `−m(t_f)` in scaled units.
pub fn objective(final_state: &SpacecraftState) -> f64 {
    -final_state.mass
}

impl TransferProblem {
    pub fn new(config: TransferConfig) -> Result<Self, ProblemError> {
        config.initial.validate()?;
        config.terminal.validate()?;
        if !(config.thrust.t_max_n > 0.0) {
            return Err(ProblemError::Thrust(config.thrust.t_max_n));
        }
        let c = &config.constants;
        if [c.earth_radius, c.mu_earth, c.g0, c.m0, c.isp].iter().any(|v| !(*v > 0.0)) {
            return Err(ProblemError::Config("physical constants must be positive".into()));
        }
        if (config.thrust.s0 * c.m0 - config.thrust.t_max_n).abs() > 1e-9 * config.thrust.t_max_n {
            return Err(ProblemError::Config(format!(
                "thrust {} N is inconsistent with s0 = {} m/s² at m0 = {} kg",
                config.thrust.t_max_n, config.thrust.s0, c.m0
            )));
        }
        let scales = make_scales(c);
        let scaled = |o: &OrbitSpec| {
            let mut coe = o.classical();
            coe.a /= scales.du;
            coe_to_mee(&coe).map_err(|e| ProblemError::Orbit(e.to_string()))
        };
        let initial = scaled(&config.initial)?;
        let terminal = scaled(&config.terminal)?;
        let params = DynamicsParams { mu: 1.0, exhaust_velocity: c.g0 * c.isp / scales.vu };
        let t_max = config.thrust.t_max_n / scales.fu;

        let mut events = Vec::new();
        let tan2 = |deg: f64| (deg.to_radians() / 2.0).tan().powi(2);
        if config.initial.e > 0.0 {
            events.push(EventRow::InitialEccentricity(config.initial.e));
        }
        if config.initial.i_deg > 0.0 {
            events.push(EventRow::InitialInclination(tan2(config.initial.i_deg)));
            if let Some(raan) = config.initial.raan_deg {
                events.push(EventRow::InitialNode(raan.to_radians()));
            }
        }
        if config.terminal.e > 0.0 {
            events.push(EventRow::FinalEccentricity(config.terminal.e));
        }
        if config.terminal.i_deg > 0.0 {
            events.push(EventRow::FinalInclination(tan2(config.terminal.i_deg)));
        }

        let a_f = terminal.p / (1.0 - config.terminal.e.powi(2));
        let horizon = Horizon { tf_max: 100.0 * TAU * a_f.powf(1.5), l_max: 400.0 * PI };
        Ok(Self { config, scales, params, t_max, initial, terminal, horizon, events })
    }

    pub fn p0(&self) -> f64 {
        self.initial.p
    }

    pub fn pf(&self) -> f64 {
        self.terminal.p
    }

    /// Period of the terminal orbit, scaled.
    pub fn terminal_period(&self) -> f64 {
        let a = self.terminal.p / (1.0 - self.config.terminal.e.powi(2));
        TAU * a.powf(1.5)
    }

    /// Sets the final-time and longitude caps from a guess of the given
    /// duration (scaled) and revolution count.
    pub fn set_horizon_from_guess(&mut self, duration: f64, revolutions: f64, l0: f64) {
        let tf_max = (3.0 * duration).max(duration + 2.0 * self.terminal_period());
        self.horizon = Horizon { tf_max, l_max: l0 + TAU * (revolutions.max(0.0) + 2.0) };
    }

    /// Time derivative of the scaled state under throttle and direction.
    pub fn rates<D: Scalar>(&self, x: &[D], u: &[D]) -> [D; 7] {
        mee_rates(x, u[0] * self.t_max, [u[1], u[2], u[3]], &self.params)
    }

    /// The seven relations `p(t0) = p0`, `f²+g²(t0) = e0²`, `h²+k²(t0) =
    /// tan²(i0/2)`, `k cos Ω0 − h sin Ω0 = 0`, `p(tf) = pf`, `f²+g²(tf) =
    /// ef²`, `h²+k²(tf) = tan²(if/2)` as residuals.
    pub fn event_residuals(&self, x0: &SpacecraftState, xf: &SpacecraftState) -> [f64; 7] {
        let (a, b) = (&x0.mee, &xf.mee);
        let tan2 = |deg: f64| (deg.to_radians() / 2.0).tan().powi(2);
        let raan0 = self.config.initial.raan_deg.unwrap_or(0.0).to_radians();
        [
            a.p - self.initial.p,
            a.f * a.f + a.g * a.g - self.config.initial.e.powi(2),
            a.h * a.h + a.k * a.k - tan2(self.config.initial.i_deg),
            a.k * raan0.cos() - a.h * raan0.sin(),
            b.p - self.terminal.p,
            b.f * b.f + b.g * b.g - self.config.terminal.e.powi(2),
            b.h * b.h + b.k * b.k - tan2(self.config.terminal.i_deg),
        ]
    }

    fn p_range(&self) -> (f64, f64) {
        let lo = self.initial.p.min(self.terminal.p);
        let hi = self.initial.p.max(self.terminal.p);
        (0.5 * lo, 3.0 * hi)
    }

    fn endpoint_bounds(&self, spec: &OrbitSpec, p: f64, initial: bool) -> Bounds {
        let mut b = self.state_bounds();
        b.lower[0] = p;
        b.upper[0] = p;
        if spec.e == 0.0 {
            for j in [1, 2] {
                b.lower[j] = 0.0;
                b.upper[j] = 0.0;
            }
        }
        if spec.i_deg == 0.0 {
            for j in [3, 4] {
                b.lower[j] = 0.0;
                b.upper[j] = 0.0;
            }
        }
        if initial {
            b.lower[5] = -TAU;
            b.upper[5] = TAU;
            b.lower[6] = 1.0;
            b.upper[6] = 1.0;
        }
        b
    }
}

const DIR_BOUND: f64 = 1.1;

impl Ocp for TransferProblem {
    fn state_dim(&self) -> usize {
        7
    }

    fn control_dim(&self) -> usize {
        4
    }

    fn path_dim(&self) -> usize {
        1
    }

    fn event_dim(&self) -> usize {
        self.events.len()
    }

    fn dynamics<D: Scalar>(&self, x: &[D], u: &[D], out: &mut [D]) {
        out.copy_from_slice(&self.rates(x, u));
    }

    fn path<D: Scalar>(&self, _x: &[D], u: &[D], out: &mut [D]) {
        out[0] = u[1] * u[1] + u[2] * u[2] + u[3] * u[3];
    }

    fn events<D: Scalar>(&self, _t0: D, x0: &[D], _tf: D, xf: &[D], out: &mut [D]) {
        for (r, row) in self.events.iter().enumerate() {
            out[r] = match *row {
                EventRow::InitialEccentricity(e) => x0[1] * x0[1] + x0[2] * x0[2] - e * e,
                EventRow::InitialInclination(t2) => x0[3] * x0[3] + x0[4] * x0[4] - t2,
                EventRow::InitialNode(raan) => x0[4] * raan.cos() - x0[3] * raan.sin(),
                EventRow::FinalEccentricity(e) => xf[1] * xf[1] + xf[2] * xf[2] - e * e,
                EventRow::FinalInclination(t2) => xf[3] * xf[3] + xf[4] * xf[4] - t2,
            };
        }
    }

    fn objective<D: Scalar>(&self, _t0: D, _x0: &[D], _tf: D, xf: &[D]) -> D {
        -xf[6]
    }

    fn state_bounds(&self) -> Bounds {
        let (plo, phi) = self.p_range();
        Bounds::new(
            vec![plo, -1.0, -1.0, -1.0, -1.0, -TAU, 0.01],
            vec![phi, 1.0, 1.0, 1.0, 1.0, self.horizon.l_max, 1.0],
        )
    }

    fn initial_state_bounds(&self) -> Bounds {
        self.endpoint_bounds(&self.config.initial, self.initial.p, true)
    }

    fn final_state_bounds(&self) -> Bounds {
        self.endpoint_bounds(&self.config.terminal, self.terminal.p, false)
    }

    fn control_bounds(&self, regime: Regime) -> Bounds {
        match regime {
            Regime::Max => Bounds::new(vec![1.0, -DIR_BOUND, -DIR_BOUND, -DIR_BOUND], vec![1.0, DIR_BOUND, DIR_BOUND, DIR_BOUND]),
            Regime::Coast => Bounds::fixed(vec![0.0, 0.0, 1.0, 0.0]),
            Regime::Unclassified => {
                Bounds::new(vec![0.0, -DIR_BOUND, -DIR_BOUND, -DIR_BOUND], vec![1.0, DIR_BOUND, DIR_BOUND, DIR_BOUND])
            }
        }
    }

    fn path_bounds(&self) -> Bounds {
        Bounds::fixed(vec![1.0])
    }

    fn event_bounds(&self) -> Bounds {
        Bounds::fixed(vec![0.0; self.events.len()])
    }

    fn initial_time_bounds(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn final_time_bounds(&self) -> (f64, f64) {
        (1e-3, self.horizon.tf_max)
    }

    fn throttle(&self) -> Option<(usize, f64)> {
        Some((0, 1.0))
    }

    fn free_end_coasts(&self) -> bool {
        true
    }

    fn recenter_guess(&self, guess: &mut Trajectory) {
        let Some(first) = guess.x.first() else {
            return;
        };
        let shift = TAU * (first[5] / TAU).round();
        for x in &mut guess.x {
            x[5] -= shift;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_parsing() {
        assert_eq!("MEO".parse::<Study>(), Ok(Study::Meo));
        assert!("leo".parse::<Study>().is_err());
        assert_eq!(Study::Geo.to_string(), "geo");
    }

    #[test]
    fn unknown_case_rejected() {
        assert_eq!(build_problem(Study::Meo, 0), Err(ProblemError::UnknownCase(0)));
        assert_eq!(build_problem(Study::Meo, 8), Err(ProblemError::UnknownCase(8)));
    }

    #[test]
    fn event_rows_follow_orbit_geometry() {
        // LEO: inclination and node rows; MEO adds terminal inclination.
        assert_eq!(build_problem(Study::Meo, 1).unwrap().event_dim(), 3);
        assert_eq!(build_problem(Study::Heo, 1).unwrap().event_dim(), 4);
        assert_eq!(build_problem(Study::Geo, 1).unwrap().event_dim(), 2);
    }
}
