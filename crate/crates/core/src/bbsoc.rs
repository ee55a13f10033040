//! Bang-bang structure detection: find thrust arcs in a smooth solution,
//! re-transcribe with one regime-typed domain per arc and free switch
//! times, and refine until the mesh tolerance is met.

use std::time::{Duration, Instant};

use lowthrust_nlp::{InteriorPoint, SolveStatus, SolverBackend, SolverOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collocation::{
    estimate_error, interpolate_solution, refine_mesh, CollocationError, CollocationSolution, Domain, LgrRule, Mesh,
    Ocp, Regime, Trajectory, Transcription, TranscriptionOptions,
};

/// Interior runs at least this long are reported as singular suspects.
pub const SINGULAR_MIN_POINTS: usize = 5;
/// Runs shorter than this are absorbed into a neighbour.
pub const MIN_ARC_POINTS: usize = 2;

#[derive(Debug, Error)]
pub enum BbsocError {
    #[error("problem has no throttle control to classify")]
    NoThrottle,
    #[error("invalid detection settings: {0}")]
    Config(String),
    #[error("smooth-mesh solve failed: {0}")]
    Smooth(CollocationError),
    #[error("smooth-mesh solve ended {status:?} with violation {violation:e}")]
    SmoothInfeasible { status: SolveStatus, violation: f64 },
    #[error("solve on structure {structure} failed: {source}")]
    Structured { structure: String, source: CollocationError },
    #[error("no feasible regime-typed solution after {iterations} iterations (last structure {structure})")]
    NoFeasible { iterations: usize, structure: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArcKind {
    Max,
    Coast,
    SingularSuspect,
}

impl ArcKind {
    pub fn regime(self) -> Regime {
        match self {
            ArcKind::Max => Regime::Max,
            ArcKind::Coast => Regime::Coast,
            ArcKind::SingularSuspect => Regime::Unclassified,
        }
    }

    fn from_regime(r: Regime) -> Self {
        match r {
            Regime::Max => ArcKind::Max,
            Regime::Coast => ArcKind::Coast,
            Regime::Unclassified => ArcKind::SingularSuspect,
        }
    }

    fn symbol(self) -> char {
        match self {
            ArcKind::Max => 'M',
            ArcKind::Coast => 'C',
            ArcKind::SingularSuspect => 'S',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub kind: ArcKind,
    pub start: f64,
    pub end: f64,
    /// Collocation points classified into the arc.
    pub points: usize,
}

impl Arc {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Ordered arcs tiling the horizon, adjacent arcs of different kinds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlStructure {
    pub arcs: Vec<Arc>,
}

impl ControlStructure {
    pub fn switch_count(&self) -> usize {
        self.arcs.len().saturating_sub(1)
    }

    /// Number of maximum-thrust arcs.
    pub fn thrust_arcs(&self) -> usize {
        self.arcs.iter().filter(|a| a.kind == ArcKind::Max).count()
    }

    pub fn switch_times(&self) -> Vec<f64> {
        self.arcs.iter().skip(1).map(|a| a.start).collect()
    }

    pub fn has_singular(&self) -> bool {
        self.arcs.iter().any(|a| a.kind == ArcKind::SingularSuspect)
    }

    pub fn kinds(&self) -> Vec<ArcKind> {
        self.arcs.iter().map(|a| a.kind).collect()
    }

    /// Compact form such as `M-C-M`.
    pub fn signature(&self) -> String {
        let s: Vec<String> = self.arcs.iter().map(|a| a.kind.symbol().to_string()).collect();
        s.join("-")
    }

    /// Structure of a regime-typed solution, read off its domains.
    pub fn from_domains(sol: &CollocationSolution) -> Self {
        let times = sol.domain_times();
        let mut arcs: Vec<Arc> = Vec::new();
        for (d, dom) in sol.mesh.domains.iter().enumerate() {
            let kind = ArcKind::from_regime(dom.regime);
            let (start, end) = times[d];
            match arcs.last_mut() {
                Some(last) if last.kind == kind => {
                    last.end = end;
                    last.points += dom.num_points();
                }
                _ => arcs.push(Arc { kind, start, end, points: dom.num_points() }),
            }
        }
        Self { arcs }
    }
}

impl std::fmt::Display for ControlStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.signature())
    }
}

#[derive(Debug, Clone, Copy)]
struct Run {
    kind: ArcKind,
    first: usize,
    last: usize,
}

impl Run {
    fn len(&self) -> usize {
        self.last - self.first + 1
    }
}

fn group(kinds: &[ArcKind]) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for (i, &kind) in kinds.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.kind == kind => r.last = i,
            _ => runs.push(Run { kind, first: i, last: i }),
        }
    }
    runs
}

/// Classifies a sampled thrust profile into arcs on `[t0, tf]`.
///
/// Points are max when `T ≥ (1 − η)·T_max` and coast when `T ≤ η·T_max`.
/// Intermediate runs shorter than [`SINGULAR_MIN_POINTS`] are split at half
/// throttle; runs shorter than [`MIN_ARC_POINTS`] join the longer
/// neighbour. Switches sit midway between the bracketing points.
pub fn classify_profile(times: &[f64], thrust: &[f64], t0: f64, tf: f64, eta: f64, t_max: f64) -> ControlStructure {
    if times.is_empty() {
        return ControlStructure::default();
    }
    let mut kinds: Vec<ArcKind> = thrust
        .iter()
        .map(|&t| {
            if t >= (1.0 - eta) * t_max {
                ArcKind::Max
            } else if t <= eta * t_max {
                ArcKind::Coast
            } else {
                ArcKind::SingularSuspect
            }
        })
        .collect();
    for r in group(&kinds) {
        if r.kind == ArcKind::SingularSuspect && r.len() < SINGULAR_MIN_POINTS {
            for i in r.first..=r.last {
                kinds[i] = if thrust[i] >= 0.5 * t_max { ArcKind::Max } else { ArcKind::Coast };
            }
        }
    }
    loop {
        let runs = group(&kinds);
        if runs.len() <= 1 {
            break;
        }
        let Some(k) = (0..runs.len()).filter(|&k| runs[k].len() < MIN_ARC_POINTS).min_by_key(|&k| runs[k].len())
        else {
            break;
        };
        let prev = k.checked_sub(1).map(|j| runs[j]);
        let next = runs.get(k + 1).copied();
        let into = match (prev, next) {
            (Some(p), Some(n)) => {
                if n.len() > p.len() {
                    n.kind
                } else {
                    p.kind
                }
            }
            (Some(p), None) => p.kind,
            (None, Some(n)) => n.kind,
            (None, None) => unreachable!(),
        };
        for i in runs[k].first..=runs[k].last {
            kinds[i] = into;
        }
    }
    let runs = group(&kinds);
    let mut arcs = Vec::with_capacity(runs.len());
    for (k, r) in runs.iter().enumerate() {
        let start = if k == 0 { t0 } else { 0.5 * (times[runs[k - 1].last] + times[r.first]) };
        let end = if k + 1 == runs.len() { tf } else { 0.5 * (times[r.last] + times[runs[k + 1].first]) };
        arcs.push(Arc { kind: r.kind, start, end, points: r.len() });
    }
    ControlStructure { arcs }
}

/// Detects the control structure of a solution from its throttle values at
/// the collocation points.
pub fn detect_structure(sol: &CollocationSolution, throttle: (usize, f64), eta: f64) -> ControlStructure {
    let (idx, t_max) = throttle;
    let thrust: Vec<f64> = sol.controls.iter().map(|u| u[idx]).collect();
    classify_profile(&sol.point_times, &thrust, sol.t0(), sol.tf(), eta, t_max)
}

#[derive(Debug, Clone)]
pub struct DetectionConfig {
    /// Relative jump threshold η.
    pub eta: f64,
    /// Intervals of the initial smooth mesh.
    pub intervals: usize,
    /// Collocation points per initial interval.
    pub points: usize,
    pub mesh_tolerance: f64,
    pub nlp_tolerance: f64,
    pub max_outer_iterations: usize,
    /// Mesh refinements per regime-typed structure.
    pub max_refinements: usize,
    /// Refinements of the smooth mesh before detection, taken only while
    /// its error estimate exceeds the mesh tolerance.
    pub smooth_refinements: usize,
    pub min_domain_width: f64,
    pub max_wall_time: Option<Duration>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            intervals: 10,
            points: 3,
            mesh_tolerance: 1e-2,
            nlp_tolerance: 1e-7,
            max_outer_iterations: 5,
            max_refinements: 10,
            smooth_refinements: 1,
            min_domain_width: 1e-4,
            max_wall_time: None,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), BbsocError> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(BbsocError::Config(format!("eta = {} must lie in (0, 1)", self.eta)));
        }
        if self.intervals == 0 || self.points == 0 {
            return Err(BbsocError::Config("mesh needs at least one interval and one point".into()));
        }
        if self.points > crate::collocation::refine::MAX_ORDER {
            return Err(BbsocError::Config(format!("at most {} points per interval", crate::collocation::refine::MAX_ORDER)));
        }
        if !(self.mesh_tolerance > 0.0 && self.nlp_tolerance > 0.0) {
            return Err(BbsocError::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Smooth,
    Partition,
    Refine,
    Repair,
}

/// One line of the machine-readable iteration log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub stage: Stage,
    pub structure: String,
    pub thrust_arcs: usize,
    pub intervals: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub feasible: bool,
    pub max_error: f64,
    pub nlp_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct BbsocOutcome {
    pub solution: CollocationSolution,
    pub structure: ControlStructure,
    pub smooth: CollocationSolution,
    /// Largest error estimate on the returned mesh.
    pub max_error: f64,
    /// Whether the returned mesh meets the tolerance.
    pub mesh_converged: bool,
    pub history: Vec<IterationRecord>,
}

struct Runner<'a, P: Ocp> {
    ocp: &'a P,
    config: &'a DetectionConfig,
    backend: &'a dyn SolverBackend,
    started: Instant,
    history: Vec<IterationRecord>,
}

fn is_feasible(sol: &CollocationSolution) -> bool {
    sol.status.is_feasible() && sol.max_violation <= 1e-6
}

impl<P: Ocp> Runner<'_, P> {
    fn out_of_time(&self) -> bool {
        self.config.max_wall_time.is_some_and(|t| self.started.elapsed() >= t)
    }

    fn solver_options(&self) -> SolverOptions {
        let mut opts = SolverOptions::with_tolerance(self.config.nlp_tolerance);
        if let Some(t) = self.config.max_wall_time {
            opts.max_wall_time = Some(t.saturating_sub(self.started.elapsed()).max(Duration::from_millis(1)));
        }
        opts
    }

    fn transcription_options(&self) -> TranscriptionOptions {
        TranscriptionOptions { min_domain_width: self.config.min_domain_width }
    }

    fn record(&mut self, outer: usize, stage: Stage, sol: &CollocationSolution, structure: &ControlStructure, err: f64) {
        let rec = IterationRecord {
            outer,
            stage,
            structure: structure.signature(),
            thrust_arcs: structure.thrust_arcs(),
            intervals: sol.mesh.num_intervals(),
            objective: sol.objective,
            max_violation: sol.max_violation,
            feasible: is_feasible(sol),
            max_error: err,
            nlp_iterations: sol.iterations,
        };
        log::info!("{}", serde_json::to_string(&rec).unwrap_or_default());
        self.history.push(rec);
    }

    fn solve(&self, mesh: &Mesh, guess: &Trajectory) -> Result<CollocationSolution, CollocationError> {
        let tr = Transcription::new(self.ocp, mesh, self.transcription_options())?;
        tr.solve(guess, self.backend, &self.solver_options())
    }
}

/// Node times of a mesh laid over `[t0, tf]` with domain boundaries at the
/// mesh fractions.
fn mesh_times(mesh: &Mesh, t0: f64, tf: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for (d, dom) in mesh.domains.iter().enumerate() {
        let a = t0 + mesh.fractions[d] * (tf - t0);
        let b = t0 + mesh.fractions[d + 1] * (tf - t0);
        let mut s = a;
        for (&w, &n) in dom.intervals.iter().zip(&dom.points) {
            let e = s + w * (b - a);
            let rule = LgrRule::new(n).expect("mesh orders are valid");
            out.extend(rule.support().iter().map(|tau| s + 0.5 * (tau + 1.0) * (e - s)));
            s = e;
        }
    }
    out
}

/// Samples `sol` on `[start, end]` at the node times `mesh` will use, with
/// times shifted by `shift`.
fn resample(
    sol: &CollocationSolution,
    mesh: &Mesh,
    start: f64,
    end: f64,
    shift: f64,
) -> Result<Trajectory, CollocationError> {
    let mut times = mesh_times(mesh, start, end);
    times.extend(sol.node_times.iter().copied().filter(|&t| t > start && t < end));
    times.push(start);
    times.push(end);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut traj = interpolate_solution(sol, &times)?;
    for t in &mut traj.t {
        *t += shift;
    }
    Ok(traj)
}

/// Starting point of a regime-typed solve.
enum Prior<'a> {
    Solved(CollocationSolution),
    Sampled(&'a Trajectory),
}

impl Prior<'_> {
    fn span(&self) -> (f64, f64) {
        match self {
            Prior::Solved(sol) => (sol.t0(), sol.tf()),
            Prior::Sampled(traj) => (traj.t[0], traj.t[traj.t.len() - 1]),
        }
    }

    fn resample(&self, mesh: &Mesh, start: f64, end: f64, shift: f64) -> Result<Trajectory, CollocationError> {
        let traj = match self {
            Prior::Solved(sol) => return resample(sol, mesh, start, end, shift),
            Prior::Sampled(traj) => traj,
        };
        let (t0, tf) = self.span();
        if start < t0 || end > tf {
            return Err(CollocationError::Extrapolation(if start < t0 { start } else { end }));
        }
        let mut times = mesh_times(mesh, start, end);
        times.extend(traj.t.iter().copied().filter(|&t| t > start && t < end));
        times.push(start);
        times.push(end);
        times.sort_by(f64::total_cmp);
        times.dedup();
        Ok(Trajectory {
            x: times.iter().map(|&t| traj.state_at(t)).collect(),
            u: times.iter().map(|&t| traj.control_at(t)).collect(),
            t: times.iter().map(|t| t + shift).collect(),
        })
    }
}

/// The structure carried by a guess whose throttle is already bang-bang,
/// when it has more than one arc.
fn guess_structure(guess: &Trajectory, throttle: (usize, f64), eta: f64) -> Option<ControlStructure> {
    let (idx, t_max) = throttle;
    let thrust: Vec<f64> = guess.u.iter().map(|u| u[idx]).collect();
    let crisp = thrust.iter().all(|&v| v <= eta * t_max || v >= (1.0 - eta) * t_max);
    let (t0, tf) = (*guess.t.first()?, *guess.t.last()?);
    let structure = classify_profile(&guess.t, &thrust, t0, tf, eta, t_max);
    (crisp && structure.arcs.len() > 1).then_some(structure)
}

/// Mesh with one domain per arc, boundaries free, interval counts in
/// proportion to the points each arc held in the prior solution.
fn structure_mesh(structure: &ControlStructure, points: usize) -> Mesh {
    let t0 = structure.arcs[0].start;
    let tf = structure.arcs.last().unwrap().end;
    let domains = structure
        .arcs
        .iter()
        .map(|a| Domain::uniform(a.kind.regime(), a.points.div_ceil(points).max(1), points))
        .collect();
    let mut fractions: Vec<f64> = structure.arcs.iter().map(|a| (a.start - t0) / (tf - t0)).collect();
    fractions.push(1.0);
    fractions[0] = 0.0;
    Mesh { domains, fractions, free_boundaries: true }
}

/// Leading and trailing coasts removed, when the problem allows it.
fn trimmed<P: Ocp>(ocp: &P, structure: &ControlStructure) -> ControlStructure {
    let mut arcs = structure.arcs.clone();
    if ocp.free_end_coasts() && arcs.iter().any(|a| a.kind != ArcKind::Coast) {
        while arcs.first().is_some_and(|a| a.kind == ArcKind::Coast) {
            arcs.remove(0);
        }
        while arcs.last().is_some_and(|a| a.kind == ArcKind::Coast) {
            arcs.pop();
        }
    }
    ControlStructure { arcs }
}

/// Re-solves on a regime-typed mesh built from `structure`, starting from
/// `prior`. Coasts at the ends are dropped when the problem allows it.
pub fn partition_and_solve<P: Ocp>(
    ocp: &P,
    structure: &ControlStructure,
    prior: &CollocationSolution,
    config: &DetectionConfig,
    backend: &dyn SolverBackend,
) -> Result<CollocationSolution, BbsocError> {
    let runner =
        Runner { ocp, config, backend, started: Instant::now(), history: Vec::new() };
    solve_structure(&runner, structure, &Prior::Solved(prior.clone())).map(|(sol, _)| sol)
}

fn solve_structure<P: Ocp>(
    runner: &Runner<'_, P>,
    structure: &ControlStructure,
    prior: &Prior<'_>,
) -> Result<(CollocationSolution, f64), BbsocError> {
    let wrap = |source| BbsocError::Structured { structure: structure.signature(), source };
    let used = trimmed(runner.ocp, structure);
    if used.arcs.is_empty() {
        return Err(BbsocError::Config("empty control structure".into()));
    }
    let mesh = structure_mesh(&used, runner.config.points);
    let start = used.arcs[0].start;
    let end = used.arcs.last().unwrap().end;
    let (lo, hi) = runner.ocp.initial_time_bounds();
    let shift = start.clamp(lo, hi) - start;
    let mut guess = prior.resample(&mesh, start, end, shift).map_err(wrap)?;
    runner.ocp.recenter_guess(&mut guess);
    runner.solve(&mesh, &guess).map(|sol| (sol, shift)).map_err(wrap)
}

fn shifted(structure: &ControlStructure, by: f64) -> ControlStructure {
    let arcs = structure.arcs.iter().map(|a| Arc { start: a.start + by, end: a.end + by, ..*a }).collect();
    ControlStructure { arcs }
}

/// `structure` clipped to `[t0, tf]`, dropping arcs left empty.
fn fitted(structure: &ControlStructure, t0: f64, tf: f64) -> ControlStructure {
    let arcs = structure
        .arcs
        .iter()
        .map(|a| Arc { start: a.start.clamp(t0, tf), end: a.end.clamp(t0, tf), ..*a })
        .filter(|a| a.end > a.start)
        .collect();
    ControlStructure { arcs }
}

/// The mesh of `sol` with its domain boundaries moved to the solved times.
fn settled_mesh(sol: &CollocationSolution) -> Mesh {
    let mut mesh = sol.mesh.clone();
    if mesh.free_boundaries {
        let (t0, tf) = (sol.t0(), sol.tf());
        let times = sol.domain_times();
        for d in 1..mesh.domains.len() {
            mesh.fractions[d] = (times[d].0 - t0) / (tf - t0);
        }
    }
    mesh
}

fn collapsed(sol: &CollocationSolution, floor: f64) -> Option<usize> {
    sol.domain_times().iter().position(|(a, b)| b - a <= 1.5 * floor)
}

/// Structure with one domain removed and its neighbours joined.
fn prune(structure: &ControlStructure, d: usize) -> ControlStructure {
    let mut arcs = structure.arcs.clone();
    let gone = arcs.remove(d);
    if d > 0 && d < arcs.len() {
        arcs[d - 1].end = gone.start + 0.5 * gone.duration();
        arcs[d].start = arcs[d - 1].end;
        if arcs[d - 1].kind == arcs[d].kind {
            let next = arcs.remove(d);
            arcs[d - 1].end = next.end;
            arcs[d - 1].points += next.points;
        }
    } else if d == 0 && !arcs.is_empty() {
        arcs[0].start = gone.start;
    } else if let Some(last) = arcs.last_mut() {
        last.end = gone.end;
    }
    ControlStructure { arcs }
}

/// Splits the arc holding the interval with the largest error estimate,
/// inserting a candidate arc of the opposite regime over the middle third
/// of that interval.
fn repair<P: Ocp>(ocp: &P, structure: &ControlStructure, sol: &CollocationSolution) -> Option<ControlStructure> {
    let est = estimate_error(ocp, sol);
    let worst = est.iter().enumerate().filter(|(_, e)| e.is_finite()).max_by(|a, b| a.1.total_cmp(b.1));
    let span = sol.spans[worst.map_or(0, |(k, _)| k)];
    let w = span.t_end - span.t_start;
    let (a, b) = (span.t_start + w / 3.0, span.t_end - w / 3.0);
    let mut arcs = Vec::new();
    for arc in &structure.arcs {
        if a > arc.start && b < arc.end && arc.kind != ArcKind::SingularSuspect {
            let opposite = if arc.kind == ArcKind::Max { ArcKind::Coast } else { ArcKind::Max };
            arcs.push(Arc { end: a, points: 1, ..*arc });
            arcs.push(Arc { kind: opposite, start: a, end: b, points: span.order });
            arcs.push(Arc { start: b, points: 1, ..*arc });
        } else {
            arcs.push(*arc);
        }
    }
    (arcs.len() > structure.arcs.len()).then_some(ControlStructure { arcs })
}

/// The full loop: smooth solve, detection, regime-typed re-solve, mesh
/// refinement, and re-detection until the structure is stable.
pub fn bbsoc_solve<P: Ocp>(
    ocp: &P,
    config: &DetectionConfig,
    guess: &Trajectory,
) -> Result<BbsocOutcome, BbsocError> {
    bbsoc_solve_with(ocp, config, guess, &InteriorPoint)
}

pub fn bbsoc_solve_with<P: Ocp>(
    ocp: &P,
    config: &DetectionConfig,
    guess: &Trajectory,
    backend: &dyn SolverBackend,
) -> Result<BbsocOutcome, BbsocError> {
    config.validate()?;
    let throttle = ocp.throttle().ok_or(BbsocError::NoThrottle)?;
    let mut run = Runner { ocp, config, backend, started: Instant::now(), history: Vec::new() };

    let mut mesh = Mesh::uniform(config.intervals, config.points);
    let mut smooth = run.solve(&mesh, guess).map_err(BbsocError::Smooth)?;
    if !is_feasible(&smooth) {
        return Err(BbsocError::SmoothInfeasible { status: smooth.status, violation: smooth.max_violation });
    }
    let mut err = max_estimate(ocp, &smooth);
    run.record(0, Stage::Smooth, &smooth, &detect_structure(&smooth, throttle, config.eta), err);
    for _ in 0..config.smooth_refinements {
        if err <= config.mesh_tolerance || run.out_of_time() {
            break;
        }
        let Some(next_mesh) = refine_mesh(&smooth.mesh, &estimate_error(ocp, &smooth), config.mesh_tolerance) else {
            break;
        };
        let Ok(guess) = resample(&smooth, &next_mesh, smooth.t0(), smooth.tf(), 0.0) else {
            break;
        };
        match run.solve(&next_mesh, &guess) {
            Ok(next) if is_feasible(&next) => {
                smooth = next;
                mesh = smooth.mesh.clone();
                err = max_estimate(ocp, &smooth);
                run.record(0, Stage::Smooth, &smooth, &detect_structure(&smooth, throttle, config.eta), err);
            }
            _ => break,
        }
    }
    let mut structure = detect_structure(&smooth, throttle, config.eta);

    if structure.has_singular() && !run.out_of_time() {
        mesh = crate::collocation::refine::bisect_all(&mesh);
        if let Ok(dense) = run.solve(&mesh, &smooth.to_trajectory()) {
            if is_feasible(&dense) {
                let again = detect_structure(&dense, throttle, config.eta / 10.0);
                run.record(0, Stage::Smooth, &dense, &again, f64::NAN);
                smooth = dense;
                structure = again;
            }
        }
    }

    let mut best: Option<(CollocationSolution, f64)> = None;
    let detected = structure.signature();
    if let Some(carried) = guess_structure(guess, throttle, config.eta) {
        if let Err(e) = typed_loop(&mut run, throttle, carried, Prior::Sampled(guess), &mut best) {
            log::warn!("structure carried by the guess: {e}");
        }
    }
    typed_loop(&mut run, throttle, structure, Prior::Solved(smooth.clone()), &mut best)?;

    let Some((solution, max_error)) = best else {
        return Err(BbsocError::NoFeasible { iterations: config.max_outer_iterations, structure: detected });
    };
    let structure = ControlStructure::from_domains(&solution);
    Ok(BbsocOutcome {
        mesh_converged: max_error <= config.mesh_tolerance,
        solution,
        structure,
        smooth,
        max_error,
        history: run.history,
    })
}

/// Regime-typed solves starting from `structure`, with repair, pruning,
/// refinement and re-detection. Feasible results compete for `best`.
fn typed_loop<P: Ocp>(
    run: &mut Runner<'_, P>,
    throttle: (usize, f64),
    mut structure: ControlStructure,
    mut prior: Prior<'_>,
    best: &mut Option<(CollocationSolution, f64)>,
) -> Result<(), BbsocError> {
    let (ocp, config) = (run.ocp, run.config);
    let mut repaired = false;
    for outer in 1..=config.max_outer_iterations {
        if run.out_of_time() {
            break;
        }
        let (mut sol, shift) = match solve_structure(run, &structure, &prior) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{e}");
                if best.is_some() {
                    break;
                }
                return Err(e);
            }
        };
        let typed = ControlStructure::from_domains(&sol);
        run.record(outer, Stage::Partition, &sol, &typed, f64::NAN);

        if !is_feasible(&sol) {
            if repaired || run.out_of_time() {
                break;
            }
            repaired = true;
            match repair(ocp, &typed, &sol) {
                Some(next) => {
                    run.record(outer, Stage::Repair, &sol, &next, f64::NAN);
                    let (t0, tf) = prior.span();
                    structure = fitted(&shifted(&next, -shift), t0, tf);
                    continue;
                }
                None => break,
            }
        }
        if let Some(d) = collapsed(&sol, config.min_domain_width) {
            if typed.arcs.len() > 1 {
                let next = prune(&typed, d);
                run.record(outer, Stage::Repair, &sol, &next, f64::NAN);
                prior = Prior::Solved(sol);
                structure = next;
                continue;
            }
        }

        // Mesh refinement within the domains.
        let mut err = max_estimate(ocp, &sol);
        run.record(outer, Stage::Refine, &sol, &typed, err);
        let mut refinements = 0;
        while err > config.mesh_tolerance && refinements < config.max_refinements && !run.out_of_time() {
            let settled = settled_mesh(&sol);
            let est = estimate_error(ocp, &sol);
            let Some(next_mesh) = refine_mesh(&settled, &est, config.mesh_tolerance) else {
                break;
            };
            let guess = match resample(&sol, &next_mesh, sol.t0(), sol.tf(), 0.0) {
                Ok(g) => g,
                Err(_) => break,
            };
            refinements += 1;
            match run.solve(&next_mesh, &guess) {
                Ok(next) if is_feasible(&next) => {
                    sol = next;
                    err = max_estimate(ocp, &sol);
                    let typed = ControlStructure::from_domains(&sol);
                    run.record(outer, Stage::Refine, &sol, &typed, err);
                }
                Ok(next) => {
                    run.record(outer, Stage::Refine, &next, &typed, f64::NAN);
                    break;
                }
                Err(e) => {
                    log::warn!("refinement solve failed: {e}");
                    break;
                }
            }
        }

        let better = best.as_ref().is_none_or(|(b, e)| {
            let met = err <= config.mesh_tolerance;
            let b_met = *e <= config.mesh_tolerance;
            (met && !b_met) || (met == b_met && sol.objective < b.objective)
        });
        let final_typed = ControlStructure::from_domains(&sol);
        if better {
            *best = Some((sol.clone(), err));
        }

        // Re-detection on the refined solution.
        let redetected = detect_structure(&sol, throttle, config.eta);
        let trimmed_again = trimmed(ocp, &redetected);
        if trimmed_again.kinds() == final_typed.kinds() || run.out_of_time() {
            break;
        }
        prior = Prior::Solved(sol);
        structure = redetected;
    }
    Ok(())
}

fn max_estimate<P: Ocp>(ocp: &P, sol: &CollocationSolution) -> f64 {
    estimate_error(ocp, sol).into_iter().fold(0.0, f64::max)
}
