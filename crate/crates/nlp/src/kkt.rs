use crate::problem::Nlp;
use crate::solver::NlpSolution;

/// First-order optimality residuals of a returned solution, measured
/// independently of the solver's internal bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Max-norm of `∇f + Jᵀλ - z_l + z_u` over the non-fixed variables.
    pub stationarity: f64,
    /// Max-norm violation of the constraints and bounds.
    pub feasibility: f64,
    /// Largest `|z_l (x - x_l)|`, `|z_u (x_u - x)|`, or `|λ_i (g_i - g_bound)|`
    /// for active inequalities.
    pub complementarity: f64,
}

impl KktReport {
    pub fn satisfied(&self, tolerance: f64) -> bool {
        self.stationarity <= tolerance && self.feasibility <= tolerance && self.complementarity <= tolerance
    }
}

/// Evaluates the KKT conditions of `nlp` at `solution`.
pub fn kkt_residuals(nlp: &dyn Nlp, solution: &NlpSolution) -> KktReport {
    let n = nlp.num_variables();
    let m = nlp.num_constraints();
    let x = &solution.x;
    let mut xl = vec![0.0; n];
    let mut xu = vec![0.0; n];
    nlp.variable_bounds(&mut xl, &mut xu);
    let mut gl = vec![0.0; m];
    let mut gu = vec![0.0; m];
    nlp.constraint_bounds(&mut gl, &mut gu);

    let mut r = vec![0.0; n];
    nlp.gradient(x, &mut r);
    let js = nlp.jacobian_structure();
    let mut jv = vec![0.0; js.len()];
    nlp.jacobian_values(x, &mut jv);
    for (&(row, col), v) in js.iter().zip(&jv) {
        r[col] += v * solution.lambda[row];
    }
    let mut stationarity: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for i in 0..n {
        if xl[i] == xu[i] {
            continue;
        }
        stationarity = stationarity.max((r[i] - solution.z_lower[i] + solution.z_upper[i]).abs());
        if xl[i].is_finite() {
            complementarity = complementarity.max((solution.z_lower[i] * (x[i] - xl[i])).abs());
        }
        if xu[i].is_finite() {
            complementarity = complementarity.max((solution.z_upper[i] * (xu[i] - x[i])).abs());
        }
    }
    let mut g = vec![0.0; m];
    nlp.constraints(x, &mut g);
    for i in 0..m {
        if gl[i] < gu[i] {
            let lam = solution.lambda[i];
            let dist = if lam < 0.0 { gu[i] - g[i] } else { g[i] - gl[i] };
            if dist.is_finite() {
                complementarity = complementarity.max((lam * dist).abs());
            }
        }
    }
    KktReport {
        stationarity,
        feasibility: crate::solver::constraint_violation(nlp, x),
        complementarity,
    }
}
