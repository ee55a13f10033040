//! Solution interpolation, error estimation and mesh refinement.

use super::lgr::{differentiation_matrix, lagrange_weights, LgrRule};
use super::mesh::{Domain, Mesh};
use super::transcription::{CollocationError, CollocationSolution, IntervalSpan, Ocp, Trajectory};

/// Highest collocation order used by refinement.
pub const MAX_ORDER: usize = 10;

fn tau_of(span: &IntervalSpan, t: f64) -> f64 {
    2.0 * (t - span.t_start) / (span.t_end - span.t_start) - 1.0
}

fn locate(sol: &CollocationSolution, t: f64) -> usize {
    sol.spans.partition_point(|s| s.t_end < t).min(sol.spans.len() - 1)
}

/// State (degree `n` through nodes and end point) and control (degree
/// `n − 1` through the collocation points) of one interval at `t`.
fn interval_values(sol: &CollocationSolution, span: &IntervalSpan, rule: &LgrRule, t: f64) -> (Vec<f64>, Vec<f64>) {
    let tau = tau_of(span, t);
    let ws = lagrange_weights(&rule.support(), tau);
    let nx = sol.states[0].len();
    let mut x = vec![0.0; nx];
    for (l, w) in ws.iter().enumerate() {
        for s in 0..nx {
            x[s] += w * sol.states[span.node + l][s];
        }
    }
    let wu = lagrange_weights(&rule.nodes, tau);
    let nu = sol.controls[0].len();
    let mut u = vec![0.0; nu];
    for (l, w) in wu.iter().enumerate() {
        for q in 0..nu {
            u[q] += w * sol.controls[span.point + l][q];
        }
    }
    (x, u)
}

/// Evaluates the piecewise-polynomial solution at the query times.
pub fn interpolate_solution(sol: &CollocationSolution, times: &[f64]) -> Result<Trajectory, CollocationError> {
    let (t0, tf) = (sol.t0(), sol.tf());
    let slack = 1e-12 * (tf - t0).abs().max(1.0);
    let mut out = Trajectory::default();
    for &t in times {
        if t < t0 - slack || t > tf + slack {
            return Err(CollocationError::Extrapolation(t));
        }
        let span = &sol.spans[locate(sol, t)];
        let rule = LgrRule::new(span.order).expect("orders in a solved mesh are valid");
        let (mut x, mut u) = interval_values(sol, span, &rule, t.clamp(t0, tf));
        if let Some(l) = (0..=span.order).find(|&l| sol.node_times[span.node + l] == t) {
            x = sol.states[span.node + l].clone();
            if l < span.order {
                u = sol.controls[span.point + l].clone();
            }
        }
        out.t.push(t);
        out.x.push(x);
        out.u.push(u);
    }
    Ok(out)
}

/// Per-interval relative dynamics residual on a grid finer than the
/// collocation points.
pub fn estimate_error<P: Ocp>(ocp: &P, sol: &CollocationSolution) -> Vec<f64> {
    let nx = sol.states[0].len();
    let mut scale = vec![0.0f64; nx];
    for x in &sol.states {
        for s in 0..nx {
            scale[s] = scale[s].max(x[s].abs());
        }
    }
    sol.spans
        .iter()
        .map(|span| {
            let rule = LgrRule::new(span.order).expect("valid order");
            let dt = span.t_end - span.t_start;
            if !(dt > 0.0) {
                return 0.0;
            }
            let support = rule.support();
            let samples = LgrRule::new(span.order + 1).expect("valid order").nodes;
            let mut grid: Vec<f64> = samples.clone();
            grid.extend(samples.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            grid.push(0.5 * (samples.last().unwrap() + 1.0));
            let dmat = differentiation_matrix(&support, &grid);
            let m = support.len();
            let mut err: f64 = 0.0;
            let mut f = vec![0.0; nx];
            for (gi, &tau) in grid.iter().enumerate() {
                let t = span.t_start + 0.5 * (tau + 1.0) * dt;
                let (x, u) = interval_values(sol, span, &rule, t);
                ocp.dynamics(&x, &u, &mut f);
                for s in 0..nx {
                    let mut dx = 0.0;
                    for l in 0..m {
                        dx += dmat[gi * m + l] * sol.states[span.node + l][s];
                    }
                    let resid = (dx * 2.0 / dt - f[s]).abs() * dt / (1.0 + scale[s]);
                    err = err.max(resid);
                }
            }
            err
        })
        .collect()
}

/// Splits or raises the order of every interval whose estimate exceeds
/// `tolerance`. Returns `None` when the mesh already meets it.
pub fn refine_mesh(mesh: &Mesh, estimates: &[f64], tolerance: f64) -> Option<Mesh> {
    if estimates.iter().all(|&e| e <= tolerance) {
        return None;
    }
    let mut k = 0;
    let mut domains = Vec::with_capacity(mesh.domains.len());
    for dom in &mesh.domains {
        let mut intervals = Vec::new();
        let mut points = Vec::new();
        for (&w, &n) in dom.intervals.iter().zip(&dom.points) {
            let e = estimates[k];
            k += 1;
            if e <= tolerance {
                intervals.push(w);
                points.push(n);
            } else if e / tolerance > 100.0 || n >= MAX_ORDER {
                intervals.extend([0.5 * w, 0.5 * w]);
                points.extend([n, n]);
            } else {
                let extra = ((e / tolerance).log10().ceil() as usize).max(1);
                intervals.push(w);
                points.push((n + extra).min(MAX_ORDER));
            }
        }
        domains.push(Domain { regime: dom.regime, intervals, points });
    }
    Some(Mesh { domains, fractions: mesh.fractions.clone(), free_boundaries: mesh.free_boundaries })
}

/// Uniform h-refinement: every interval split in two.
pub fn bisect_all(mesh: &Mesh) -> Mesh {
    let estimates = vec![f64::INFINITY; mesh.num_intervals()];
    refine_mesh(mesh, &estimates, 1.0).expect("infinite estimates always refine")
}
