use std::time::Duration;

use crate::problem::{Nlp, NlpError};

/// Options shared by every [`SolverBackend`].
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Convergence tolerance on the scaled KKT conditions.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// A run that stays below this error for `acceptable_iterations`
    /// consecutive iterations stops early with [`SolveStatus::FeasibleOnly`].
    pub acceptable_tolerance: f64,
    pub acceptable_iterations: usize,
    /// Row scaling of the constraints from the Jacobian at the starting point.
    pub scale_constraints: bool,
    /// Gradient-based scaling of the objective.
    pub scale_objective: bool,
    pub mu_init: f64,
    pub max_wall_time: Option<Duration>,
    /// Emit one `log::debug!` line per iteration.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_iterations: 3000,
            acceptable_tolerance: 1e-6,
            acceptable_iterations: 15,
            scale_constraints: true,
            scale_objective: true,
            mu_init: 0.1,
            max_wall_time: None,
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            acceptable_tolerance: (tolerance * 10.0).max(tolerance),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    /// KKT conditions satisfied to the requested tolerance.
    Optimal,
    /// Constraints satisfied to tolerance, optimality not certified.
    FeasibleOnly,
    IterationLimit,
    /// Converged to a point of (local) infeasibility.
    Infeasible,
    /// Numerical breakdown.
    Error,
}

impl SolveStatus {
    /// Whether the returned point satisfies the constraints.
    pub fn is_feasible(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleOnly)
    }
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Constraint values g(x).
    pub constraints: Vec<f64>,
    /// Multipliers of g in the Lagrangian `f + λᵀg - z_lᵀ(x - x_l) - z_uᵀ(x_u - x)`.
    pub lambda: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the scaled constraint violation.
    pub primal_infeasibility: f64,
    /// Max-norm of the unscaled constraint violation.
    pub max_violation: f64,
    /// Scaled stationarity error at the returned point.
    pub dual_infeasibility: f64,
    pub objective_scale: f64,
    pub constraint_scale: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub exact_hessian: bool,
    pub sparse: bool,
}

/// Anything that can solve an [`Nlp`] from a starting point.
pub trait SolverBackend {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn solve(&self, nlp: &dyn Nlp, start: &[f64], options: &SolverOptions) -> Result<NlpSolution, NlpError>;
}

/// Max-norm violation of `g_l <= g <= g_u` and `x_l <= x <= x_u`.
pub fn constraint_violation(nlp: &dyn Nlp, x: &[f64]) -> f64 {
    let n = nlp.num_variables();
    let m = nlp.num_constraints();
    let mut g = vec![0.0; m];
    nlp.constraints(x, &mut g);
    let mut gl = vec![0.0; m];
    let mut gu = vec![0.0; m];
    nlp.constraint_bounds(&mut gl, &mut gu);
    let mut xl = vec![0.0; n];
    let mut xu = vec![0.0; n];
    nlp.variable_bounds(&mut xl, &mut xu);
    let mut viol: f64 = 0.0;
    for i in 0..m {
        viol = viol.max(gl[i] - g[i]).max(g[i] - gu[i]);
    }
    for i in 0..n {
        viol = viol.max(xl[i] - x[i]).max(x[i] - xu[i]);
    }
    viol
}
