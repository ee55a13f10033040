//! Initial guesses: forward propagation along the velocity vector, and a
//! chain of one-revolution sub-problems for multi-revolution transfers.

use std::f64::consts::TAU;

use lowthrust_nlp::{InteriorPoint, SolverOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collocation::{Bounds, CollocationError, Mesh, Ocp, Regime, Scalar, Trajectory, Transcription, TranscriptionOptions};
use crate::dynamics::{
    mee_rates, propagate_longitude, velocity_direction, ControlInput, DynamicsError, DynamicsParams, Sample,
    SpacecraftState,
};
use crate::elements::EquinoctialElements;
use crate::ode::OdeOptions;
use crate::problem::TransferProblem;

#[derive(Debug, Error)]
pub enum GuessError {
    #[error("p = p_f was not reached within {0} revolutions")]
    EventUnreached(f64),
    #[error("sub-problem objective did not decrease for {cycles} cycles (last values {history:?})")]
    Stall { cycles: usize, history: Vec<f64> },
    #[error("sub-problem {cycle} failed: {source}")]
    SubProblem { cycle: usize, source: CollocationError },
    #[error("sub-problem {0} returned an infeasible solution")]
    SubProblemInfeasible(usize),
    #[error("targets not met after {0} sub-problems")]
    CycleLimit(usize),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Propagated,
    Chained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseClass {
    Partial,
    Multiple,
}

/// A time-ordered guess with controls in physical (scaled) thrust.
#[derive(Debug, Clone)]
pub struct GuessTrajectory {
    pub samples: Vec<Sample>,
    pub revolutions: f64,
    pub provenance: Provenance,
    /// Target-distance objective at the end of each sub-problem.
    pub cycle_objectives: Vec<f64>,
}

impl GuessTrajectory {
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t) - self.samples.first().map_or(0.0, |s| s.t)
    }

    pub fn initial(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn terminal(&self) -> &Sample {
        self.samples.last().unwrap()
    }

    /// Samples as a collocation guess for `prob`: states `[p, f, g, h, k, L,
    /// m]`, controls `[τ, u_r, u_t, u_n]`.
    pub fn to_trajectory(&self, prob: &TransferProblem) -> Trajectory {
        let mut traj = Trajectory::default();
        for s in &self.samples {
            if traj.t.last().is_some_and(|&t| s.t <= t) {
                continue;
            }
            traj.t.push(s.t);
            traj.x.push(s.state.to_array().to_vec());
            let c = &s.control;
            traj.u.push(vec![c.thrust / prob.t_max, c.dir[0], c.dir[1], c.dir[2]]);
        }
        traj
    }

    /// Points the guess's horizon caps on `prob` at this trajectory.
    pub fn apply_horizon(&self, prob: &mut TransferProblem) {
        let l0 = self.initial().state.mee.l;
        prob.set_horizon_from_guess(self.duration(), self.revolutions, l0);
    }
}

fn revolutions(samples: &[Sample]) -> f64 {
    match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => (b.state.mee.l - a.state.mee.l) / TAU,
        _ => 0.0,
    }
}

fn initial_state(prob: &TransferProblem) -> SpacecraftState {
    SpacecraftState { mee: prob.initial, mass: 1.0 }
}

fn along_velocity(thrust: f64) -> impl Fn(f64, &SpacecraftState) -> ControlInput {
    move |_, s| ControlInput { thrust, dir: velocity_direction(&s.mee) }
}

/// Revolution cap for [`propagated_guess`].
pub const PROPAGATION_REVOLUTIONS: f64 = 2.0;

/// Maximum thrust along the velocity in the longitude domain, stopped when
/// `p` reaches its terminal value.
pub fn propagated_guess(prob: &TransferProblem) -> Result<GuessTrajectory, GuessError> {
    propagate_to_pf(prob, prob.t_max)
}

fn propagate_to_pf(prob: &TransferProblem, thrust: f64) -> Result<GuessTrajectory, GuessError> {
    let s0 = initial_state(prob);
    let pf = prob.pf();
    let opts = OdeOptions { event_tol: 1e-12, ..OdeOptions::with_tolerance(1e-8, 1e-10) };
    let l_end = s0.mee.l + TAU * PROPAGATION_REVOLUTIONS;
    let run = propagate_longitude(
        &s0,
        0.0,
        l_end,
        &prob.params,
        along_velocity(thrust),
        Some(move |s: &SpacecraftState| s.mee.p - pf),
        &opts,
    )?;
    if !run.event {
        return Err(GuessError::EventUnreached(PROPAGATION_REVOLUTIONS));
    }
    let samples = run.samples;
    Ok(GuessTrajectory {
        revolutions: revolutions(&samples),
        samples,
        provenance: Provenance::Propagated,
        cycle_objectives: Vec::new(),
    })
}

/// Partial when the propagated guess reaches `p_f` and a single solve on
/// `mesh` from it finishes within one revolution.
pub fn classify_case(prob: &TransferProblem, mesh: &Mesh) -> CaseClass {
    let Ok(guess) = propagated_guess(prob) else {
        return CaseClass::Multiple;
    };
    let mut local = prob.clone();
    guess.apply_horizon(&mut local);
    let Ok(tr) = Transcription::new(&local, mesh, TranscriptionOptions::default()) else {
        return CaseClass::Multiple;
    };
    match tr.solve(&guess.to_trajectory(&local), &InteriorPoint, &SolverOptions::default()) {
        Ok(sol) if sol.status.is_feasible() => {
            let l = |x: &Vec<f64>| x[5];
            let n = (l(sol.states.last().unwrap()) - l(&sol.states[0])) / TAU;
            if n > 1.0 {
                CaseClass::Multiple
            } else {
                CaseClass::Partial
            }
        }
        _ => CaseClass::Multiple,
    }
}

/// Target orbit of the sub-problem chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    pub p: f64,
    pub e: f64,
    pub i: f64,
}

impl Targets {
    pub fn of(prob: &TransferProblem) -> Self {
        let t = &prob.config.terminal;
        Self { p: prob.pf(), e: t.e, i: t.i_deg.to_radians() }
    }

    /// Mean square relative difference between `mee` and the targets.
    pub fn objective<D: Scalar>(&self, p: D, f: D, g: D, h: D, k: D) -> D {
        let tan2 = (self.i / 2.0).tan().powi(2);
        let a = (p - self.p) / (1.0 + self.p);
        let b = (f * f + g * g - self.e * self.e) / (1.0 + self.e * self.e);
        let c = (h * h + k * k - tan2) / (1.0 + tan2);
        a * a + b * b + c * c
    }

    /// Whether `p`, `e` and `i` are all within `tol` of the targets.
    pub fn met(&self, mee: &EquinoctialElements, tol: f64) -> bool {
        (mee.p - self.p).abs() <= tol
            && (mee.eccentricity() - self.e).abs() <= tol
            && (mee.inclination() - self.i).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainOptions {
    pub intervals: usize,
    pub points: usize,
    pub nlp_tolerance: f64,
    pub target_tolerance: f64,
    /// Cycles without a decrease of the objective before giving up.
    pub stall_cycles: usize,
    pub max_cycles: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { intervals: 10, points: 3, nlp_tolerance: 1e-5, target_tolerance: 1e-4, stall_cycles: 5, max_cycles: 400 }
    }
}

/// One sub-problem in the longitude domain. States `[p, f, g, h, k, t, m,
/// L]`, controls `[τ, u_r, u_t, u_n]`; the independent variable is `L`.
#[derive(Debug, Clone)]
pub struct CycleProblem {
    pub start: [f64; 7],
    pub l0: f64,
    pub targets: Targets,
    /// Objective at the cycle start, dividing the cycle objective.
    pub scale: f64,
    pub t_max: f64,
    pub params: DynamicsParams,
    p_range: (f64, f64),
}

impl CycleProblem {
    fn new(prob: &TransferProblem, start: &Sample) -> Self {
        let s = &start.state;
        let m = &s.mee;
        let p_lo = 0.5 * prob.p0().min(prob.pf());
        let p_hi = 3.0 * prob.p0().max(prob.pf());
        let targets = Targets::of(prob);
        Self {
            start: [m.p, m.f, m.g, m.h, m.k, start.t, s.mass],
            l0: m.l,
            targets,
            scale: targets.objective(m.p, m.f, m.g, m.h, m.k).max(1e-300),
            t_max: prob.t_max,
            params: prob.params,
            p_range: (p_lo, p_hi),
        }
    }
}

impl Ocp for CycleProblem {
    fn state_dim(&self) -> usize {
        8
    }

    fn control_dim(&self) -> usize {
        4
    }

    fn path_dim(&self) -> usize {
        1
    }

    fn event_dim(&self) -> usize {
        0
    }

    fn dynamics<D: Scalar>(&self, x: &[D], u: &[D], out: &mut [D]) {
        let xt = [x[0], x[1], x[2], x[3], x[4], x[7], x[6]];
        let d = mee_rates(&xt, u[0] * self.t_max, [u[1], u[2], u[3]], &self.params);
        let dt_dl = d[5].recip();
        for j in 0..5 {
            out[j] = d[j] * dt_dl;
        }
        out[5] = dt_dl;
        out[6] = d[6] * dt_dl;
        out[7] = D::from(1.0);
    }

    fn path<D: Scalar>(&self, _x: &[D], u: &[D], out: &mut [D]) {
        out[0] = u[1] * u[1] + u[2] * u[2] + u[3] * u[3];
    }

    fn events<D: Scalar>(&self, _t0: D, _x0: &[D], _tf: D, _xf: &[D], _out: &mut [D]) {}

    fn objective<D: Scalar>(&self, _t0: D, _x0: &[D], _tf: D, xf: &[D]) -> D {
        self.targets.objective(xf[0], xf[1], xf[2], xf[3], xf[4]) / self.scale
    }

    fn state_bounds(&self) -> Bounds {
        Bounds::new(
            vec![self.p_range.0, -1.0, -1.0, -1.0, -1.0, self.start[5], 0.01, self.l0],
            vec![self.p_range.1, 1.0, 1.0, 1.0, 1.0, 1e6, 1.0, self.l0 + TAU],
        )
    }

    fn initial_state_bounds(&self) -> Bounds {
        let mut v = self.start.to_vec();
        v.push(self.l0);
        Bounds::fixed(v)
    }

    fn control_bounds(&self, _regime: Regime) -> Bounds {
        Bounds::new(vec![0.0, -1.1, -1.1, -1.1], vec![1.0, 1.1, 1.1, 1.1])
    }

    fn path_bounds(&self) -> Bounds {
        Bounds::fixed(vec![1.0])
    }

    fn event_bounds(&self) -> Bounds {
        Bounds::fixed(Vec::new())
    }

    fn initial_time_bounds(&self) -> (f64, f64) {
        (self.l0, self.l0)
    }

    fn final_time_bounds(&self) -> (f64, f64) {
        (self.l0 + 1e-3, self.l0 + TAU)
    }

    fn throttle(&self) -> Option<(usize, f64)> {
        Some((0, 1.0))
    }
}

/// Result of one link of the chain.
#[derive(Debug, Clone)]
pub struct SubProblemResult {
    pub samples: Vec<Sample>,
    pub terminal: Sample,
    pub objective: f64,
}

fn unit(d: [f64; 3]) -> [f64; 3] {
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if n > 0.0 {
        [d[0] / n, d[1] / n, d[2] / n]
    } else {
        [0.0, 1.0, 0.0]
    }
}

fn chained(samples: Vec<Sample>, history: Vec<f64>) -> GuessTrajectory {
    GuessTrajectory {
        revolutions: revolutions(&samples),
        samples,
        provenance: Provenance::Chained,
        cycle_objectives: history[1..].to_vec(),
    }
}

/// One revolution flown along the velocity at the given thrust.
fn cycle_seed(prob: &TransferProblem, start: &Sample, l_end: f64, thrust: f64) -> Result<Trajectory, GuessError> {
    let run = propagate_longitude(
        &start.state,
        start.t,
        l_end,
        &prob.params,
        along_velocity(thrust),
        None::<fn(&SpacecraftState) -> f64>,
        &OdeOptions::with_tolerance(1e-8, 1e-10),
    )?;
    let tau = thrust / prob.t_max;
    let mut seed = Trajectory::default();
    for s in &run.samples {
        let m = &s.state.mee;
        seed.t.push(m.l);
        seed.x.push(vec![m.p, m.f, m.g, m.h, m.k, s.t, s.state.mass, m.l]);
        seed.u.push(vec![tau, s.control.dir[0], s.control.dir[1], s.control.dir[2]]);
    }
    Ok(seed)
}

fn solve_cycle(
    prob: &TransferProblem,
    start: &Sample,
    cycle: usize,
    opts: &ChainOptions,
) -> Result<SubProblemResult, GuessError> {
    let sub = CycleProblem::new(prob, start);
    let thrust = prob.t_max;
    let seed = cycle_seed(prob, start, sub.l0 + TAU, thrust).or_else(|_| cycle_seed(prob, start, sub.l0 + TAU, 0.0))?;
    let mesh = Mesh::uniform(opts.intervals, opts.points);
    let wrap = |source| GuessError::SubProblem { cycle, source };
    let tr = Transcription::new(&sub, &mesh, TranscriptionOptions::default()).map_err(wrap)?;
    let sol = tr.solve(&seed, &InteriorPoint, &SolverOptions::with_tolerance(opts.nlp_tolerance)).map_err(wrap)?;
    if !sol.status.is_feasible() {
        return Err(GuessError::SubProblemInfeasible(cycle));
    }
    let sample = |l: f64, x: &[f64], u: &[f64]| Sample {
        t: x[5],
        state: SpacecraftState {
            mee: EquinoctialElements { p: x[0], f: x[1], g: x[2], h: x[3], k: x[4], l },
            mass: x[6],
        },
        control: ControlInput { thrust: u[0] * thrust, dir: unit([u[1], u[2], u[3]]) },
    };
    let traj = sol.to_trajectory();
    let samples: Vec<Sample> = traj.t.iter().zip(&traj.x).zip(&traj.u).map(|((&l, x), u)| sample(l, x, u)).collect();
    let terminal = *samples.last().unwrap();
    let m = &terminal.state.mee;
    let objective = sub.targets.objective(m.p, m.f, m.g, m.h, m.k);
    Ok(SubProblemResult { samples, terminal, objective })
}

/// Chains one-revolution sub-problems minimizing the distance to the
/// terminal orbit until `p`, `e` and `i` are within tolerance.
pub fn chained_guess(prob: &TransferProblem) -> Result<GuessTrajectory, GuessError> {
    chained_guess_with(prob, &ChainOptions::default())
}

pub fn chained_guess_with(prob: &TransferProblem, opts: &ChainOptions) -> Result<GuessTrajectory, GuessError> {
    let targets = Targets::of(prob);
    let s0 = initial_state(prob);
    let first = Sample { t: 0.0, state: s0, control: along_velocity(prob.t_max)(0.0, &s0) };
    let mut samples = vec![first];
    let m = &s0.mee;
    let mut history = vec![targets.objective(m.p, m.f, m.g, m.h, m.k)];
    let mut worse = 0;
    for cycle in 1..=opts.max_cycles {
        let last = *samples.last().unwrap();
        if targets.met(&last.state.mee, opts.target_tolerance) {
            return Ok(chained(samples, history));
        }
        let res = solve_cycle(prob, &last, cycle, opts)?;
        log::debug!(
            "guess cycle {cycle}: J = {:.3e}, p = {:.6}, L = {:.4}",
            res.objective,
            res.terminal.state.mee.p,
            res.terminal.state.mee.l
        );
        if res.objective >= *history.last().unwrap() {
            worse += 1;
            if worse >= opts.stall_cycles {
                history.push(res.objective);
                let tail = history.len().saturating_sub(opts.stall_cycles + 1);
                return Err(GuessError::Stall { cycles: worse, history: history[tail..].to_vec() });
            }
        } else {
            worse = 0;
        }
        history.push(res.objective);
        if let Some(first) = samples.last_mut() {
            first.control = res.samples[0].control;
        }
        samples.extend_from_slice(&res.samples[1..]);
    }
    let last = samples.last().unwrap();
    if targets.met(&last.state.mee, opts.target_tolerance) {
        return Ok(chained(samples, history));
    }
    Err(GuessError::CycleLimit(opts.max_cycles))
}
