use thiserror::Error;

/// A smooth nonlinear program
///
/// ```txt
///     min f(x)   s.t.   g_l <= g(x) <= g_u,   x_l <= x <= x_u
/// ```
///
/// described through callbacks, in the style of IPOPT's `TNLP`. Equality
/// constraints have `g_l == g_u`; a variable with `x_l == x_u` is fixed and
/// removed from the iteration. Infinite bounds are `f64::INFINITY`.
///
/// Sparse matrices are given in coordinate form. The Hessian structure lists
/// lower-triangle entries only (`row >= col`); duplicates are summed.
pub trait Nlp {
    fn num_variables(&self) -> usize;
    fn num_constraints(&self) -> usize;

    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]);
    fn constraint_bounds(&self, lower: &mut [f64], upper: &mut [f64]);

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], g: &mut [f64]);

    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[f64], values: &mut [f64]);

    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Values of `obj_factor * ∇²f(x) + Σ_i lambda_i ∇²g_i(x)` on the
    /// structure returned by [`Nlp::hessian_structure`].
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], values: &mut [f64]);
}

/// Problems with the NLP description itself, as opposed to convergence
/// failures (which are reported through [`crate::SolveStatus`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlpError {
    #[error("starting point has {got} entries, problem has {expected} variables")]
    StartDimension { got: usize, expected: usize },
    #[error("inconsistent bounds on variable {index}: [{lower}, {upper}]")]
    VariableBounds { index: usize, lower: f64, upper: f64 },
    #[error("inconsistent bounds on constraint {index}: [{lower}, {upper}]")]
    ConstraintBounds { index: usize, lower: f64, upper: f64 },
    #[error("{kind} structure entry ({row}, {col}) out of range")]
    Structure { kind: &'static str, row: usize, col: usize },
    #[error("Hessian structure entry ({row}, {col}) is above the diagonal")]
    HessianTriangle { row: usize, col: usize },
    #[error("non-finite {0} at the starting point")]
    NonFinite(&'static str),
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(#[from] crate::ldl::LdlError),
}

/// Checks structural consistency of an [`Nlp`] and returns its bounds.
pub(crate) fn validate(nlp: &dyn Nlp) -> Result<ProblemBounds, NlpError> {
    let n = nlp.num_variables();
    let m = nlp.num_constraints();
    let mut xl = vec![0.0; n];
    let mut xu = vec![0.0; n];
    nlp.variable_bounds(&mut xl, &mut xu);
    for i in 0..n {
        if !(xl[i] <= xu[i]) || xl[i] == f64::INFINITY || xu[i] == f64::NEG_INFINITY {
            return Err(NlpError::VariableBounds { index: i, lower: xl[i], upper: xu[i] });
        }
    }
    let mut gl = vec![0.0; m];
    let mut gu = vec![0.0; m];
    nlp.constraint_bounds(&mut gl, &mut gu);
    for i in 0..m {
        if !(gl[i] <= gu[i]) {
            return Err(NlpError::ConstraintBounds { index: i, lower: gl[i], upper: gu[i] });
        }
    }
    for (r, c) in nlp.jacobian_structure() {
        if r >= m || c >= n {
            return Err(NlpError::Structure { kind: "Jacobian", row: r, col: c });
        }
    }
    for (r, c) in nlp.hessian_structure() {
        if r >= n || c >= n {
            return Err(NlpError::Structure { kind: "Hessian", row: r, col: c });
        }
        if r < c {
            return Err(NlpError::HessianTriangle { row: r, col: c });
        }
    }
    Ok(ProblemBounds { xl, xu, gl, gu })
}

#[derive(Debug, Clone)]
pub(crate) struct ProblemBounds {
    pub xl: Vec<f64>,
    pub xu: Vec<f64>,
    pub gl: Vec<f64>,
    pub gu: Vec<f64>,
}
