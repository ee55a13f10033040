//! Multi-domain LGR transcription of an optimal control problem into an
//! [`Nlp`].

use std::collections::BTreeMap;

use lowthrust_nlp::{Nlp, NlpSolution, SolveStatus, SolverBackend, SolverOptions};
use num_dual::{Dual64, DualNum, HyperDual64};
use thiserror::Error;

use super::lgr::LgrRule;
use super::mesh::{Mesh, Regime};

/// Number types the problem callbacks are evaluated with.
pub trait Scalar: DualNum<Primitive = f64> + Copy {}
impl<T: DualNum<Primitive = f64> + Copy> Scalar for T {}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn fixed(values: Vec<f64>) -> Self {
        Self { lower: values.clone(), upper: values }
    }

    fn intersect(&self, other: &Bounds) -> Bounds {
        Bounds {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a.max(*b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a.min(*b)).collect(),
        }
    }
}

/// A single-phase optimal control problem with a Mayer objective.
pub trait Ocp {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn path_dim(&self) -> usize {
        0
    }
    fn event_dim(&self) -> usize;

    fn dynamics<D: Scalar>(&self, x: &[D], u: &[D], out: &mut [D]);
    fn path<D: Scalar>(&self, _x: &[D], _u: &[D], _out: &mut [D]) {}
    fn events<D: Scalar>(&self, t0: D, x0: &[D], tf: D, xf: &[D], out: &mut [D]);
    fn objective<D: Scalar>(&self, t0: D, x0: &[D], tf: D, xf: &[D]) -> D;

    fn state_bounds(&self) -> Bounds;
    fn initial_state_bounds(&self) -> Bounds {
        self.state_bounds()
    }
    fn final_state_bounds(&self) -> Bounds {
        self.state_bounds()
    }
    /// Control bounds inside a domain of the given regime.
    fn control_bounds(&self, regime: Regime) -> Bounds;
    fn path_bounds(&self) -> Bounds {
        Bounds::new(vec![], vec![])
    }
    fn event_bounds(&self) -> Bounds;
    fn initial_time_bounds(&self) -> (f64, f64);
    fn final_time_bounds(&self) -> (f64, f64);

    /// Index and upper bound of the control that switches between
    /// regimes, if the problem has one.
    fn throttle(&self) -> Option<(usize, f64)> {
        None
    }

    /// Whether a coast at the start or end of the horizon can be dropped
    /// without changing the attainable objective.
    fn free_end_coasts(&self) -> bool {
        false
    }

    /// Adjusts a time-shifted guess so it fits the initial bounds.
    fn recenter_guess(&self, _guess: &mut Trajectory) {}
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollocationError {
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("guess has {got} {what} components, problem expects {expected}")]
    GuessDimension { what: &'static str, got: usize, expected: usize },
    #[error("guess trajectory is empty or not time ordered")]
    GuessTimes,
    #[error("query time {0} lies outside the solution horizon")]
    Extrapolation(f64),
    #[error(transparent)]
    Nlp(#[from] lowthrust_nlp::NlpError),
}

/// Time-ordered samples of state and control.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl Trajectory {
    fn bracket(&self, t: f64) -> (usize, f64) {
        let n = self.t.len();
        if n == 1 || t <= self.t[0] {
            return (0, 0.0);
        }
        if t >= self.t[n - 1] {
            return (n - 2, 1.0);
        }
        let j = self.t.partition_point(|&s| s <= t).saturating_sub(1).min(n - 2);
        let span = self.t[j + 1] - self.t[j];
        (j, if span > 0.0 { (t - self.t[j]) / span } else { 0.0 })
    }

    fn lerp(rows: &[Vec<f64>], j: usize, a: f64) -> Vec<f64> {
        if rows.len() == 1 {
            return rows[0].clone();
        }
        rows[j].iter().zip(&rows[j + 1]).map(|(x, y)| x + a * (y - x)).collect()
    }

    /// Piecewise-linear state at `t`, held constant outside the samples.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let (j, a) = self.bracket(t);
        Self::lerp(&self.x, j, a)
    }

    pub fn control_at(&self, t: f64) -> Vec<f64> {
        let (j, a) = self.bracket(t);
        Self::lerp(&self.u, j, a)
    }

    pub fn duration(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0) - self.t.first().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranscriptionOptions {
    /// Lower bound on the duration of each domain (and of the horizon).
    pub min_domain_width: f64,
}

impl Default for TranscriptionOptions {
    fn default() -> Self {
        Self { min_domain_width: 1e-4 }
    }
}

/// Placement of one mesh interval in the decision vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalLayout {
    pub domain: usize,
    pub order: usize,
    /// Index of the first state node; the interval uses `order + 1` nodes.
    pub node: usize,
    /// Index of the first collocation point.
    pub point: usize,
    /// Time variables bounding the interval's affine time map.
    time_a: usize,
    time_b: usize,
    phi_start: f64,
    phi_end: f64,
}

impl IntervalLayout {
    fn start(&self, tv: &[f64]) -> f64 {
        (1.0 - self.phi_start) * tv[self.time_a] + self.phi_start * tv[self.time_b]
    }

    fn end(&self, tv: &[f64]) -> f64 {
        (1.0 - self.phi_end) * tv[self.time_a] + self.phi_end * tv[self.time_b]
    }

    /// Half-width as `c·(τ_b − τ_a)`.
    fn half_coeff(&self) -> f64 {
        0.5 * (self.phi_end - self.phi_start)
    }
}

/// The NLP produced by transcribing an [`Ocp`] on a [`Mesh`].
pub struct Transcription<'a, P: Ocp> {
    ocp: &'a P,
    mesh: Mesh,
    options: TranscriptionOptions,
    rules: BTreeMap<usize, LgrRule>,
    intervals: Vec<IntervalLayout>,
    point_domain: Vec<usize>,
    nx: usize,
    nu: usize,
    np: usize,
    ne: usize,
    n_nodes: usize,
    n_points: usize,
    n_time: usize,
    width_rows: Vec<(usize, usize)>,
    event_vars: Vec<usize>,
    jac_structure: Vec<(usize, usize)>,
    hess_structure: Vec<(usize, usize)>,
}

impl<'a, P: Ocp> Transcription<'a, P> {
    pub fn new(ocp: &'a P, mesh: &Mesh, options: TranscriptionOptions) -> Result<Self, CollocationError> {
        mesh.validate().map_err(CollocationError::Mesh)?;
        let nx = ocp.state_dim();
        let nu = ocp.control_dim();
        let np = ocp.path_dim();
        let ne = ocp.event_dim();
        let n_dom = mesh.domains.len();
        let n_time = if mesh.free_boundaries { n_dom + 1 } else { 2 };

        let mut rules = BTreeMap::new();
        let mut intervals = Vec::new();
        let mut point_domain = Vec::new();
        let (mut node, mut point) = (0, 0);
        for (d, dom) in mesh.domains.iter().enumerate() {
            let mut cum = 0.0;
            for (k, (&w, &n)) in dom.intervals.iter().zip(&dom.points).enumerate() {
                let local_end = if k + 1 == dom.intervals.len() { 1.0 } else { cum + w };
                let (time_a, time_b, phi_start, phi_end) = if mesh.free_boundaries {
                    (d, d + 1, cum, local_end)
                } else {
                    let (fa, fb) = (mesh.fractions[d], mesh.fractions[d + 1]);
                    let map = |s: f64| if s == 1.0 { fb } else { fa + (fb - fa) * s };
                    (0, 1, map(cum), map(local_end))
                };
                if !rules.contains_key(&n) {
                    rules.insert(n, LgrRule::new(n).map_err(|e| CollocationError::Mesh(e.to_string()))?);
                }
                intervals.push(IntervalLayout { domain: d, order: n, node, point, time_a, time_b, phi_start, phi_end });
                point_domain.extend(std::iter::repeat(d).take(n));
                node += n;
                point += n;
                cum = local_end;
            }
        }
        let n_nodes = node + 1;
        let n_points = point;

        let width_rows: Vec<(usize, usize)> =
            if mesh.free_boundaries { (0..n_dom).map(|d| (d, d + 1)).collect() } else { vec![(0, 1)] };

        let mut t = Self {
            ocp,
            mesh: mesh.clone(),
            options,
            rules,
            intervals,
            point_domain,
            nx,
            nu,
            np,
            ne,
            n_nodes,
            n_points,
            n_time,
            width_rows,
            event_vars: Vec::new(),
            jac_structure: Vec::new(),
            hess_structure: Vec::new(),
        };
        let mut ev = vec![t.time_var(0)];
        ev.extend((0..nx).map(|s| t.state_var(0, s)));
        ev.push(t.time_var(n_time - 1));
        ev.extend((0..nx).map(|s| t.state_var(n_nodes - 1, s)));
        t.event_vars = ev;
        t.jac_structure = t.build_jacobian_structure();
        t.hess_structure = t.build_hessian_structure();
        Ok(t)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn intervals(&self) -> &[IntervalLayout] {
        &self.intervals
    }

    pub fn state_var(&self, node: usize, s: usize) -> usize {
        node * self.nx + s
    }

    pub fn control_var(&self, point: usize, q: usize) -> usize {
        self.n_nodes * self.nx + point * self.nu + q
    }

    pub fn time_var(&self, j: usize) -> usize {
        self.n_nodes * self.nx + self.n_points * self.nu + j
    }

    fn n_vars(&self) -> usize {
        self.time_var(self.n_time)
    }

    fn defect_row(&self, point: usize, s: usize) -> usize {
        point * self.nx + s
    }

    fn path_row(&self, point: usize, r: usize) -> usize {
        self.n_points * self.nx + point * self.np + r
    }

    fn event_row(&self, r: usize) -> usize {
        self.n_points * (self.nx + self.np) + r
    }

    fn width_row(&self, w: usize) -> usize {
        self.event_row(self.ne) + w
    }

    fn z_vars(&self, iv: &IntervalLayout, j: usize) -> Vec<usize> {
        let mut z: Vec<usize> = (0..self.nx).map(|s| self.state_var(iv.node + j, s)).collect();
        z.extend((0..self.nu).map(|q| self.control_var(iv.point + j, q)));
        z
    }

    fn build_jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut js = Vec::new();
        for iv in &self.intervals {
            for j in 0..iv.order {
                let z = self.z_vars(iv, j);
                let i = iv.point + j;
                for s in 0..self.nx {
                    let row = self.defect_row(i, s);
                    for l in 0..=iv.order {
                        js.push((row, self.state_var(iv.node + l, s)));
                    }
                    js.extend(z.iter().map(|&c| (row, c)));
                    js.push((row, self.time_var(iv.time_a)));
                    js.push((row, self.time_var(iv.time_b)));
                }
                for r in 0..self.np {
                    let row = self.path_row(i, r);
                    js.extend(z.iter().map(|&c| (row, c)));
                }
            }
        }
        for r in 0..self.ne {
            let row = self.event_row(r);
            js.extend(self.event_vars.iter().map(|&c| (row, c)));
        }
        for (w, &(a, b)) in self.width_rows.iter().enumerate() {
            js.push((self.width_row(w), self.time_var(a)));
            js.push((self.width_row(w), self.time_var(b)));
        }
        js
    }

    fn build_hessian_structure(&self) -> Vec<(usize, usize)> {
        let lower = |a: usize, b: usize| (a.max(b), a.min(b));
        let mut hs = Vec::new();
        for iv in &self.intervals {
            for j in 0..iv.order {
                let z = self.z_vars(iv, j);
                for a in 0..z.len() {
                    for b in 0..=a {
                        hs.push(lower(z[a], z[b]));
                    }
                }
                for tv in [iv.time_a, iv.time_b] {
                    hs.extend(z.iter().map(|&c| lower(self.time_var(tv), c)));
                }
            }
        }
        let ev = &self.event_vars;
        for a in 0..ev.len() {
            for b in 0..=a {
                hs.push(lower(ev[a], ev[b]));
            }
        }
        hs
    }

    fn time_values<'x>(&self, x: &'x [f64]) -> &'x [f64] {
        &x[self.time_var(0)..self.time_var(self.n_time)]
    }

    fn state<'x>(&self, x: &'x [f64], node: usize) -> &'x [f64] {
        &x[self.state_var(node, 0)..self.state_var(node, 0) + self.nx]
    }

    fn control<'x>(&self, x: &'x [f64], point: usize) -> &'x [f64] {
        &x[self.control_var(point, 0)..self.control_var(point, 0) + self.nu]
    }

    fn eval_dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nx];
        self.ocp.dynamics(x, u, &mut out);
        out
    }

    /// Values and Jacobian (row-major `nx × (nx+nu)`) of the dynamics.
    fn dynamics_jacobian(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nz = self.nx + self.nu;
        let mut jac = vec![0.0; self.nx * nz];
        let mut f = vec![0.0; self.nx];
        let mut out = vec![Dual64::from(0.0); self.nx];
        for c in 0..nz {
            let xd: Vec<Dual64> =
                x.iter().enumerate().map(|(k, &v)| Dual64::new(v, if k == c { 1.0 } else { 0.0 })).collect();
            let ud: Vec<Dual64> = u
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual64::new(v, if self.nx + k == c { 1.0 } else { 0.0 }))
                .collect();
            self.ocp.dynamics(&xd, &ud, &mut out);
            for s in 0..self.nx {
                jac[s * nz + c] = out[s].eps;
                f[s] = out[s].re;
            }
        }
        (f, jac)
    }

    fn path_jacobian(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let nz = self.nx + self.nu;
        let mut jac = vec![0.0; self.np * nz];
        let mut out = vec![Dual64::from(0.0); self.np];
        for c in 0..nz {
            let xd: Vec<Dual64> =
                x.iter().enumerate().map(|(k, &v)| Dual64::new(v, if k == c { 1.0 } else { 0.0 })).collect();
            let ud: Vec<Dual64> = u
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual64::new(v, if self.nx + k == c { 1.0 } else { 0.0 }))
                .collect();
            self.ocp.path(&xd, &ud, &mut out);
            for r in 0..self.np {
                jac[r * nz + c] = out[r].eps;
            }
        }
        jac
    }

    fn event_args<D: Scalar>(&self, x: &[f64], seed: impl Fn(usize, f64) -> D) -> (D, Vec<D>, D, Vec<D>) {
        let vals: Vec<D> = self.event_vars.iter().enumerate().map(|(k, &v)| seed(k, x[v])).collect();
        let nx = self.nx;
        (vals[0], vals[1..1 + nx].to_vec(), vals[1 + nx], vals[2 + nx..].to_vec())
    }

    /// Builds the NLP starting point from a guess trajectory.
    pub fn initial_point(&self, guess: &Trajectory) -> Result<Vec<f64>, CollocationError> {
        if guess.t.is_empty() || guess.t.windows(2).any(|w| w[1] < w[0]) || guess.x.len() != guess.t.len() {
            return Err(CollocationError::GuessTimes);
        }
        if guess.x[0].len() != self.nx {
            return Err(CollocationError::GuessDimension { what: "state", got: guess.x[0].len(), expected: self.nx });
        }
        if guess.u.len() != guess.t.len() || guess.u[0].len() != self.nu {
            let got = guess.u.first().map_or(0, Vec::len);
            return Err(CollocationError::GuessDimension { what: "control", got, expected: self.nu });
        }
        let t0 = guess.t[0];
        let tf = *guess.t.last().unwrap();
        let mut z = vec![0.0; self.n_vars()];
        let tv: Vec<f64> = if self.mesh.free_boundaries {
            self.mesh.fractions.iter().map(|f| t0 + f * (tf - t0)).collect()
        } else {
            vec![t0, tf]
        };
        for (j, &v) in tv.iter().enumerate() {
            z[self.time_var(j)] = v;
        }
        for iv in &self.intervals {
            let rule = &self.rules[&iv.order];
            let (ta, tb) = (iv.start(&tv), iv.end(&tv));
            for (l, &tau) in rule.support().iter().enumerate() {
                let t = ta + 0.5 * (tau + 1.0) * (tb - ta);
                let xs = guess.state_at(t);
                let node = iv.node + l;
                z[self.state_var(node, 0)..self.state_var(node, 0) + self.nx].copy_from_slice(&xs);
                if l < iv.order {
                    let us = guess.control_at(t);
                    let p = iv.point + l;
                    z[self.control_var(p, 0)..self.control_var(p, 0) + self.nu].copy_from_slice(&us);
                }
            }
        }
        Ok(z)
    }

    /// Times of every state node and collocation point for a decision vector.
    pub fn node_times(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let tv = self.time_values(z);
        let mut nodes = vec![0.0; self.n_nodes];
        let mut points = vec![0.0; self.n_points];
        for iv in &self.intervals {
            let rule = &self.rules[&iv.order];
            let (ta, tb) = (iv.start(tv), iv.end(tv));
            for (l, &tau) in rule.support().iter().enumerate() {
                let t = if l == iv.order { tb } else { ta + 0.5 * (tau + 1.0) * (tb - ta) };
                nodes[iv.node + l] = t;
                if l < iv.order {
                    points[iv.point + l] = t;
                }
            }
        }
        (nodes, points)
    }

    pub fn extract(&self, z: &[f64]) -> CollocationSolution {
        let tv = self.time_values(z).to_vec();
        let (node_times, point_times) = self.node_times(z);
        let spans = self
            .intervals
            .iter()
            .map(|iv| IntervalSpan {
                domain: iv.domain,
                order: iv.order,
                node: iv.node,
                point: iv.point,
                t_start: iv.start(&tv),
                t_end: iv.end(&tv),
            })
            .collect();
        CollocationSolution {
            mesh: self.mesh.clone(),
            time_vars: tv,
            spans,
            node_times,
            states: (0..self.n_nodes).map(|n| self.state(z, n).to_vec()).collect(),
            point_times,
            controls: (0..self.n_points).map(|p| self.control(z, p).to_vec()).collect(),
            point_domain: self.point_domain.clone(),
            objective: f64::NAN,
            status: SolveStatus::Error,
            max_violation: f64::NAN,
            iterations: 0,
        }
    }

    /// Transcribes, solves and extracts in one call.
    pub fn solve(
        &self,
        guess: &Trajectory,
        backend: &dyn SolverBackend,
        options: &SolverOptions,
    ) -> Result<CollocationSolution, CollocationError> {
        let z0 = self.initial_point(guess)?;
        self.solve_from(&z0, backend, options)
    }

    pub fn solve_from(
        &self,
        z0: &[f64],
        backend: &dyn SolverBackend,
        options: &SolverOptions,
    ) -> Result<CollocationSolution, CollocationError> {
        let sol: NlpSolution = backend.solve(self, z0, options)?;
        let mut out = self.extract(&sol.x);
        out.objective = sol.objective;
        out.status = sol.status;
        out.max_violation = sol.max_violation;
        out.iterations = sol.iterations;
        Ok(out)
    }
}

impl<P: Ocp> Nlp for Transcription<'_, P> {
    fn num_variables(&self) -> usize {
        self.n_vars()
    }

    fn num_constraints(&self) -> usize {
        self.width_row(self.width_rows.len())
    }

    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        let general = self.ocp.state_bounds();
        let initial = general.intersect(&self.ocp.initial_state_bounds());
        let fin = general.intersect(&self.ocp.final_state_bounds());
        for node in 0..self.n_nodes {
            let b = if node == 0 {
                &initial
            } else if node + 1 == self.n_nodes {
                &fin
            } else {
                &general
            };
            for s in 0..self.nx {
                lower[self.state_var(node, s)] = b.lower[s];
                upper[self.state_var(node, s)] = b.upper[s];
            }
        }
        let per_regime: Vec<Bounds> =
            self.mesh.domains.iter().map(|d| self.ocp.control_bounds(d.regime)).collect();
        for p in 0..self.n_points {
            let b = &per_regime[self.point_domain[p]];
            for q in 0..self.nu {
                lower[self.control_var(p, q)] = b.lower[q];
                upper[self.control_var(p, q)] = b.upper[q];
            }
        }
        let (t0l, t0u) = self.ocp.initial_time_bounds();
        let (tfl, tfu) = self.ocp.final_time_bounds();
        for j in 0..self.n_time {
            let (l, u) = if j == 0 {
                (t0l, t0u)
            } else if j + 1 == self.n_time {
                (tfl, tfu)
            } else {
                (t0l, tfu)
            };
            lower[self.time_var(j)] = l;
            upper[self.time_var(j)] = u;
        }
    }

    fn constraint_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        for i in 0..self.n_points * self.nx {
            lower[i] = 0.0;
            upper[i] = 0.0;
        }
        let pb = self.ocp.path_bounds();
        for p in 0..self.n_points {
            for r in 0..self.np {
                lower[self.path_row(p, r)] = pb.lower[r];
                upper[self.path_row(p, r)] = pb.upper[r];
            }
        }
        let eb = self.ocp.event_bounds();
        for r in 0..self.ne {
            lower[self.event_row(r)] = eb.lower[r];
            upper[self.event_row(r)] = eb.upper[r];
        }
        for w in 0..self.width_rows.len() {
            lower[self.width_row(w)] = self.options.min_domain_width;
            upper[self.width_row(w)] = f64::INFINITY;
        }
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let (t0, x0, tf, xf) = self.event_args::<f64>(x, |_, v| v);
        self.ocp.objective(t0, &x0, tf, &xf)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (k, &v) in self.event_vars.iter().enumerate() {
            let (t0, x0, tf, xf) =
                self.event_args::<Dual64>(x, |j, val| Dual64::new(val, if j == k { 1.0 } else { 0.0 }));
            grad[v] += self.ocp.objective(t0, &x0, tf, &xf).eps;
        }
    }

    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        let tv = self.time_values(x);
        for iv in &self.intervals {
            let rule = &self.rules[&iv.order];
            let h = iv.half_coeff() * (tv[iv.time_b] - tv[iv.time_a]);
            for j in 0..iv.order {
                let i = iv.point + j;
                let xs = self.state(x, iv.node + j);
                let us = self.control(x, i);
                let f = self.eval_dynamics(xs, us);
                for s in 0..self.nx {
                    let mut dx = 0.0;
                    for l in 0..=iv.order {
                        dx += rule.d(j, l) * x[self.state_var(iv.node + l, s)];
                    }
                    g[self.defect_row(i, s)] = dx - h * f[s];
                }
                if self.np > 0 {
                    let mut pv = vec![0.0; self.np];
                    self.ocp.path(xs, us, &mut pv);
                    for r in 0..self.np {
                        g[self.path_row(i, r)] = pv[r];
                    }
                }
            }
        }
        let (t0, x0, tf, xf) = self.event_args::<f64>(x, |_, v| v);
        let mut ev = vec![0.0; self.ne];
        self.ocp.events(t0, &x0, tf, &xf, &mut ev);
        for r in 0..self.ne {
            g[self.event_row(r)] = ev[r];
        }
        for (w, &(a, b)) in self.width_rows.iter().enumerate() {
            g[self.width_row(w)] = tv[b] - tv[a];
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.jac_structure.clone()
    }

    fn jacobian_values(&self, x: &[f64], values: &mut [f64]) {
        let tv = self.time_values(x);
        let nz = self.nx + self.nu;
        let mut k = 0;
        for iv in &self.intervals {
            let rule = &self.rules[&iv.order];
            let c = iv.half_coeff();
            let h = c * (tv[iv.time_b] - tv[iv.time_a]);
            for j in 0..iv.order {
                let i = iv.point + j;
                let xs = self.state(x, iv.node + j);
                let us = self.control(x, i);
                let (f, jac) = self.dynamics_jacobian(xs, us);
                for s in 0..self.nx {
                    for l in 0..=iv.order {
                        values[k] = rule.d(j, l);
                        k += 1;
                    }
                    for q in 0..nz {
                        values[k] = -h * jac[s * nz + q];
                        k += 1;
                    }
                    values[k] = c * f[s];
                    values[k + 1] = -c * f[s];
                    k += 2;
                }
                if self.np > 0 {
                    let pj = self.path_jacobian(xs, us);
                    values[k..k + self.np * nz].copy_from_slice(&pj);
                    k += self.np * nz;
                }
            }
        }
        let nv = self.event_vars.len();
        let mut ev = vec![Dual64::from(0.0); self.ne];
        let base = k;
        for col in 0..nv {
            let (t0, x0, tf, xf) =
                self.event_args::<Dual64>(x, |j, val| Dual64::new(val, if j == col { 1.0 } else { 0.0 }));
            self.ocp.events(t0, &x0, tf, &xf, &mut ev);
            for r in 0..self.ne {
                values[base + r * nv + col] = ev[r].eps;
            }
        }
        k = base + self.ne * nv;
        for _ in &self.width_rows {
            values[k] = -1.0;
            values[k + 1] = 1.0;
            k += 2;
        }
        debug_assert_eq!(k, self.jac_structure.len());
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess_structure.clone()
    }

    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], values: &mut [f64]) {
        let tv = self.time_values(x);
        let nz = self.nx + self.nu;
        let mut fo = vec![HyperDual64::from(0.0); self.nx];
        let mut po = vec![HyperDual64::from(0.0); self.np];
        let mut k = 0;
        for iv in &self.intervals {
            let c = iv.half_coeff();
            let h = c * (tv[iv.time_b] - tv[iv.time_a]);
            for j in 0..iv.order {
                let i = iv.point + j;
                let xs = self.state(x, iv.node + j);
                let us = self.control(x, i);
                let z: Vec<f64> = xs.iter().chain(us).copied().collect();
                let lam: Vec<f64> = (0..self.nx).map(|s| lambda[self.defect_row(i, s)]).collect();
                let nu_p: Vec<f64> = (0..self.np).map(|r| lambda[self.path_row(i, r)]).collect();
                // Gradient of λᵀF for the time cross terms.
                let mut grad_lf = vec![0.0; nz];
                for a in 0..nz {
                    for b in 0..=a {
                        let zd: Vec<HyperDual64> = z
                            .iter()
                            .enumerate()
                            .map(|(q, &v)| {
                                HyperDual64::new(v, if q == a { 1.0 } else { 0.0 }, if q == b { 1.0 } else { 0.0 }, 0.0)
                            })
                            .collect();
                        self.ocp.dynamics(&zd[..self.nx], &zd[self.nx..], &mut fo);
                        let mut v = 0.0;
                        let mut g1 = 0.0;
                        for s in 0..self.nx {
                            v -= h * lam[s] * fo[s].eps1eps2;
                            g1 += lam[s] * fo[s].eps1;
                        }
                        if self.np > 0 {
                            self.ocp.path(&zd[..self.nx], &zd[self.nx..], &mut po);
                            for r in 0..self.np {
                                v += nu_p[r] * po[r].eps1eps2;
                            }
                        }
                        if a == b {
                            grad_lf[a] = g1;
                        }
                        values[k] = v;
                        k += 1;
                    }
                }
                // ∂²/∂τ_a∂z = +c·∇(λᵀF), ∂²/∂τ_b∂z = −c·∇(λᵀF).
                for sign in [c, -c] {
                    for a in 0..nz {
                        values[k] = sign * grad_lf[a];
                        k += 1;
                    }
                }
            }
        }
        let nv = self.event_vars.len();
        let lam_e: Vec<f64> = (0..self.ne).map(|r| lambda[self.event_row(r)]).collect();
        let mut eo = vec![HyperDual64::from(0.0); self.ne];
        for a in 0..nv {
            for b in 0..=a {
                let (t0, x0, tf, xf) = self.event_args::<HyperDual64>(x, |j, val| {
                    HyperDual64::new(val, if j == a { 1.0 } else { 0.0 }, if j == b { 1.0 } else { 0.0 }, 0.0)
                });
                let obj = self.ocp.objective(t0, &x0, tf, &xf);
                self.ocp.events(t0, &x0, tf, &xf, &mut eo);
                let mut v = obj_factor * obj.eps1eps2;
                for r in 0..self.ne {
                    v += lam_e[r] * eo[r].eps1eps2;
                }
                values[k] = v;
                k += 1;
            }
        }
        debug_assert_eq!(k, self.hess_structure.len());
    }
}

/// Time span and storage offsets of one solved interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalSpan {
    pub domain: usize,
    pub order: usize,
    pub node: usize,
    pub point: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// A transcribed solution in trajectory form.
#[derive(Debug, Clone)]
pub struct CollocationSolution {
    pub mesh: Mesh,
    pub time_vars: Vec<f64>,
    pub spans: Vec<IntervalSpan>,
    /// Times of the state nodes (collocation points plus interval ends).
    pub node_times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub point_times: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    pub point_domain: Vec<usize>,
    pub objective: f64,
    pub status: SolveStatus,
    pub max_violation: f64,
    pub iterations: usize,
}

impl CollocationSolution {
    pub fn t0(&self) -> f64 {
        self.time_vars[0]
    }

    pub fn tf(&self) -> f64 {
        *self.time_vars.last().unwrap()
    }

    /// Domain start and end times.
    pub fn domain_times(&self) -> Vec<(f64, f64)> {
        (0..self.mesh.domains.len())
            .map(|d| {
                let spans: Vec<&IntervalSpan> = self.spans.iter().filter(|s| s.domain == d).collect();
                (spans[0].t_start, spans[spans.len() - 1].t_end)
            })
            .collect()
    }

    /// Samples at every state node; the final node repeats the last control.
    pub fn to_trajectory(&self) -> Trajectory {
        let mut node_u = vec![self.controls.last().cloned().unwrap_or_default(); self.states.len()];
        for s in &self.spans {
            for l in 0..s.order {
                node_u[s.node + l] = self.controls[s.point + l].clone();
            }
        }
        Trajectory { t: self.node_times.clone(), x: self.states.clone(), u: node_u }
    }
}
