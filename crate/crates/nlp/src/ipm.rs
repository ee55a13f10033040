//! Primal-dual interior-point method with a filter line search.
//!
//! The iteration follows the barrier approach of Wächter and Biegler: a
//! monotone decrease of the barrier parameter, inertia-corrected Newton
//! steps on the primal-dual system, fraction-to-the-boundary step rules,
//! a filter line search with second-order corrections, and a
//! Gauss-Newton feasibility restoration phase.

use std::time::Instant;

use log::debug;

use crate::ldl::{Inertia, LdlError, LdlFactor};
use crate::problem::{validate, Nlp, NlpError};
use crate::solver::{Capabilities, NlpSolution, SolveStatus, SolverBackend, SolverOptions};

const BOUND_PUSH: f64 = 1e-2;
const BOUND_FRAC: f64 = 1e-2;
const BOUND_RELAX: f64 = 1e-8;
const TAU_MIN: f64 = 0.99;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const S_MAX: f64 = 100.0;
const KAPPA_SIGMA: f64 = 1e10;
const KAPPA_D: f64 = 1e-5;

const DELTA_W_INIT: f64 = 1e-4;
const DELTA_W_MIN: f64 = 1e-20;
const DELTA_W_MAX: f64 = 1e40;
const KAPPA_W_MINUS: f64 = 1.0 / 3.0;
const KAPPA_W_PLUS: f64 = 8.0;
const KAPPA_W_PLUS_FIRST: f64 = 100.0;
const DELTA_C: f64 = 1e-8;

const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const SWITCH_DELTA: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const ETA_PHI: f64 = 1e-8;
const GAMMA_ALPHA: f64 = 0.05;
const KAPPA_SOC: f64 = 0.99;
const MAX_SOC: usize = 4;

const SCALE_MIN: f64 = 1e-2;
const SCALE_MAX: f64 = 1e2;
const OBJ_SCALE_TARGET: f64 = 100.0;

/// The reference backend: sparse primal-dual interior point with exact
/// Hessians supplied by the problem.
#[derive(Debug, Default, Clone, Copy)]
pub struct InteriorPoint;

impl SolverBackend for InteriorPoint {
    fn name(&self) -> &str {
        "interior-point"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { exact_hessian: true, sparse: true }
    }

    fn solve(&self, nlp: &dyn Nlp, start: &[f64], options: &SolverOptions) -> Result<NlpSolution, NlpError> {
        let mut ipm = Ipm::new(nlp, start, options)?;
        Ok(ipm.run())
    }
}

#[derive(Debug)]
enum StepFailure {
    Restoration,
    Numerical,
}

struct Ipm<'a> {
    nlp: &'a dyn Nlp,
    opts: SolverOptions,
    n_full: usize,
    m: usize,
    free: Vec<usize>,
    n_free: usize,
    slack_of: Vec<Option<usize>>,
    n: usize,
    x_template: Vec<f64>,
    gl: Vec<f64>,
    xl: Vec<f64>,
    xu: Vec<f64>,
    has_l: Vec<bool>,
    has_u: Vec<bool>,
    df: f64,
    dc: Vec<f64>,

    // (user entry, row, internal column) of the kept Jacobian / Hessian entries.
    jac_map: Vec<(usize, usize, usize)>,
    jac_user_nnz: usize,
    hess_map: Vec<(usize, usize, usize)>,
    hess_user_nnz: usize,
    // Internal Jacobian in coordinate form: kept entries followed by slack columns.
    j_rows: Vec<usize>,
    j_cols: Vec<usize>,

    kkt_rows: Vec<usize>,
    kkt_cols: Vec<usize>,
    ldl: LdlFactor,

    x: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    mu: f64,
    delta_w_last: f64,
    filter: Vec<(f64, f64)>,
    theta_max: f64,
    theta_min: f64,
    iterations: usize,
    started: Instant,
    scratch_full: std::cell::RefCell<Vec<f64>>,
}

/// Quantities evaluated at one primal point.
#[derive(Clone)]
struct Eval {
    f: f64,
    grad: Vec<f64>,
    c: Vec<f64>,
    jac: Vec<f64>,
}

impl<'a> Ipm<'a> {
    fn new(nlp: &'a dyn Nlp, start: &[f64], opts: &SolverOptions) -> Result<Self, NlpError> {
        let bounds = validate(nlp)?;
        let n_full = nlp.num_variables();
        let m = nlp.num_constraints();
        if start.len() != n_full {
            return Err(NlpError::StartDimension { got: start.len(), expected: n_full });
        }

        let mut x_template: Vec<f64> = start.to_vec();
        let mut free = Vec::new();
        for i in 0..n_full {
            if bounds.xl[i] == bounds.xu[i] {
                x_template[i] = bounds.xl[i];
            } else {
                x_template[i] = x_template[i].clamp(bounds.xl[i], bounds.xu[i]);
                free.push(i);
            }
        }
        if x_template.iter().any(|v| !v.is_finite()) {
            return Err(NlpError::NonFinite("starting point"));
        }
        let n_free = free.len();
        let mut col_of = vec![usize::MAX; n_full];
        for (k, &i) in free.iter().enumerate() {
            col_of[i] = k;
        }
        let mut slack_of = vec![None; m];
        let mut n_slack = 0;
        for i in 0..m {
            if bounds.gl[i] < bounds.gu[i] {
                slack_of[i] = Some(n_slack);
                n_slack += 1;
            }
        }
        let n = n_free + n_slack;

        let jac_struct = nlp.jacobian_structure();
        let jac_map: Vec<(usize, usize, usize)> = jac_struct
            .iter()
            .enumerate()
            .filter(|(_, &(_, c))| col_of[c] != usize::MAX)
            .map(|(k, &(r, c))| (k, r, col_of[c]))
            .collect();
        let hess_struct = nlp.hessian_structure();
        let hess_map: Vec<(usize, usize, usize)> = hess_struct
            .iter()
            .enumerate()
            .filter(|(_, &(r, c))| col_of[r] != usize::MAX && col_of[c] != usize::MAX)
            .map(|(k, &(r, c))| (k, col_of[r], col_of[c]))
            .collect();

        let mut j_rows: Vec<usize> = jac_map.iter().map(|e| e.1).collect();
        let mut j_cols: Vec<usize> = jac_map.iter().map(|e| e.2).collect();
        for i in 0..m {
            if let Some(s) = slack_of[i] {
                j_rows.push(i);
                j_cols.push(n_free + s);
            }
        }

        // KKT pattern: x-diagonal, Hessian, Jacobian, constraint diagonal.
        let mut kkt_rows = Vec::new();
        let mut kkt_cols = Vec::new();
        for k in 0..n {
            kkt_rows.push(k);
            kkt_cols.push(k);
        }
        for &(_, r, c) in &hess_map {
            kkt_rows.push(r);
            kkt_cols.push(c);
        }
        for (&r, &c) in j_rows.iter().zip(&j_cols) {
            kkt_rows.push(n + r);
            kkt_cols.push(c);
        }
        for i in 0..m {
            kkt_rows.push(n + i);
            kkt_cols.push(n + i);
        }
        let ldl = LdlFactor::analyze(n + m, &kkt_rows, &kkt_cols)?;

        let mut xl = vec![f64::NEG_INFINITY; n];
        let mut xu = vec![f64::INFINITY; n];
        for (k, &i) in free.iter().enumerate() {
            xl[k] = bounds.xl[i];
            xu[k] = bounds.xu[i];
        }

        let mut ipm = Self {
            nlp,
            opts: opts.clone(),
            n_full,
            m,
            free,
            n_free,
            slack_of,
            n,
            x_template,
            gl: bounds.gl.clone(),
            xl,
            xu,
            has_l: vec![false; n],
            has_u: vec![false; n],
            df: 1.0,
            dc: vec![1.0; m],
            jac_user_nnz: jac_struct.len(),
            jac_map,
            hess_user_nnz: hess_struct.len(),
            hess_map,
            j_rows,
            j_cols,
            kkt_rows,
            kkt_cols,
            ldl,
            x: vec![0.0; n],
            y: vec![0.0; m],
            zl: vec![0.0; n],
            zu: vec![0.0; n],
            mu: opts.mu_init,
            delta_w_last: 0.0,
            filter: Vec::new(),
            theta_max: 0.0,
            theta_min: 0.0,
            iterations: 0,
            started: Instant::now(),
            scratch_full: std::cell::RefCell::new(vec![0.0; n_full]),
        };
        ipm.compute_scaling();

        // Slack bounds in scaled units.
        for i in 0..m {
            if let Some(s) = ipm.slack_of[i] {
                ipm.xl[n_free + s] = bounds.gl[i] * ipm.dc[i];
                ipm.xu[n_free + s] = bounds.gu[i] * ipm.dc[i];
            }
        }
        for k in 0..n {
            if ipm.xl[k].is_finite() {
                ipm.xl[k] -= BOUND_RELAX * ipm.xl[k].abs().max(1.0);
                ipm.has_l[k] = true;
            }
            if ipm.xu[k].is_finite() {
                ipm.xu[k] += BOUND_RELAX * ipm.xu[k].abs().max(1.0);
                ipm.has_u[k] = true;
            }
        }

        // Primal starting point pushed into the interior.
        let mut g_user = vec![0.0; m];
        nlp.constraints(&ipm.x_template, &mut g_user);
        for k in 0..ipm.n_free {
            ipm.x[k] = ipm.x_template[ipm.free[k]];
        }
        for i in 0..m {
            if let Some(s) = ipm.slack_of[i] {
                ipm.x[n_free + s] = g_user[i] * ipm.dc[i];
            }
        }
        for k in 0..n {
            ipm.x[k] = ipm.push_inside(k, ipm.x[k]);
        }
        Ok(ipm)
    }

    fn push_inside(&self, k: usize, v: f64) -> f64 {
        let (l, u) = (self.xl[k], self.xu[k]);
        match (self.has_l[k], self.has_u[k]) {
            (true, true) => {
                let pl = (BOUND_PUSH * l.abs().max(1.0)).min(BOUND_FRAC * (u - l));
                let pu = (BOUND_PUSH * u.abs().max(1.0)).min(BOUND_FRAC * (u - l));
                if l + pl >= u - pu {
                    0.5 * (l + u)
                } else {
                    v.clamp(l + pl, u - pu)
                }
            }
            (true, false) => v.max(l + BOUND_PUSH * l.abs().max(1.0)),
            (false, true) => v.min(u - BOUND_PUSH * u.abs().max(1.0)),
            (false, false) => v,
        }
    }

    fn compute_scaling(&mut self) {
        let x = self.x_template.clone();
        if self.opts.scale_objective {
            let mut g = vec![0.0; self.n_full];
            self.nlp.gradient(&x, &mut g);
            let gmax = self.free.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
            if gmax.is_finite() && gmax > OBJ_SCALE_TARGET {
                self.df = OBJ_SCALE_TARGET / gmax;
            }
        }
        if self.opts.scale_constraints && self.m > 0 {
            let mut jv = vec![0.0; self.jac_user_nnz];
            self.nlp.jacobian_values(&x, &mut jv);
            let mut row_max = vec![0.0f64; self.m];
            for &(k, r, _) in &self.jac_map {
                row_max[r] = row_max[r].max(jv[k].abs());
            }
            for i in 0..self.m {
                if row_max[i] > 0.0 && row_max[i].is_finite() {
                    self.dc[i] = (1.0 / row_max[i]).clamp(SCALE_MIN, SCALE_MAX);
                }
            }
        }
    }

    fn full_x(&self, x: &[f64]) -> std::cell::RefMut<'_, Vec<f64>> {
        let mut full = self.scratch_full.borrow_mut();
        full.copy_from_slice(&self.x_template);
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }

    fn eval_f(&self, x: &[f64]) -> f64 {
        let full = self.full_x(x);
        self.df * self.nlp.objective(&full)
    }

    fn eval_c(&self, x: &[f64], c: &mut [f64]) {
        let full = self.full_x(x);
        let mut g = vec![0.0; self.m];
        self.nlp.constraints(&full, &mut g);
        for i in 0..self.m {
            c[i] = match self.slack_of[i] {
                Some(s) => self.dc[i] * g[i] - x[self.n_free + s],
                None => self.dc[i] * (g[i] - self.gl[i]),
            };
        }
    }

    fn eval_grad(&self, x: &[f64], out: &mut [f64]) {
        let full = self.full_x(x);
        let mut g = vec![0.0; self.n_full];
        self.nlp.gradient(&full, &mut g);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &i) in self.free.iter().enumerate() {
            out[k] = self.df * g[i];
        }
    }

    fn eval_jac(&self, x: &[f64], out: &mut Vec<f64>) {
        let full = self.full_x(x);
        let mut jv = vec![0.0; self.jac_user_nnz];
        self.nlp.jacobian_values(&full, &mut jv);
        out.clear();
        for &(k, r, _) in &self.jac_map {
            out.push(self.dc[r] * jv[k]);
        }
        for i in 0..self.m {
            if self.slack_of[i].is_some() {
                out.push(-1.0);
            }
        }
    }

    fn eval_hess(&self, x: &[f64], y: &[f64], out: &mut Vec<f64>) {
        let full = self.full_x(x);
        let lambda: Vec<f64> = y.iter().zip(&self.dc).map(|(a, b)| a * b).collect();
        let mut hv = vec![0.0; self.hess_user_nnz];
        self.nlp.hessian_values(&full, self.df, &lambda, &mut hv);
        out.clear();
        out.extend(self.hess_map.iter().map(|&(k, _, _)| hv[k]));
    }

    fn evaluate(&self, x: &[f64]) -> Eval {
        let mut grad = vec![0.0; self.n];
        let mut c = vec![0.0; self.m];
        let mut jac = Vec::new();
        self.eval_grad(x, &mut grad);
        self.eval_c(x, &mut c);
        self.eval_jac(x, &mut jac);
        Eval { f: self.eval_f(x), grad, c, jac }
    }

    fn jt_times(&self, jac: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for ((&r, &c), &val) in self.j_rows.iter().zip(&self.j_cols).zip(jac) {
            out[c] += val * v[r];
        }
    }

    fn slack_l(&self, x: &[f64], k: usize) -> f64 {
        (x[k] - self.xl[k]).max(1e-300)
    }

    fn slack_u(&self, x: &[f64], k: usize) -> f64 {
        (self.xu[k] - x[k]).max(1e-300)
    }

    fn barrier(&self, x: &[f64], f: f64) -> f64 {
        let mut phi = f;
        for k in 0..self.n {
            match (self.has_l[k], self.has_u[k]) {
                (true, true) => phi -= self.mu * (self.slack_l(x, k).ln() + self.slack_u(x, k).ln()),
                (true, false) => {
                    let s = self.slack_l(x, k);
                    phi += -self.mu * s.ln() + KAPPA_D * self.mu * s;
                }
                (false, true) => {
                    let s = self.slack_u(x, k);
                    phi += -self.mu * s.ln() + KAPPA_D * self.mu * s;
                }
                (false, false) => {}
            }
        }
        phi
    }

    fn barrier_gradient(&self, x: &[f64], grad: &[f64]) -> Vec<f64> {
        let mut g = grad.to_vec();
        for k in 0..self.n {
            match (self.has_l[k], self.has_u[k]) {
                (true, true) => g[k] += -self.mu / self.slack_l(x, k) + self.mu / self.slack_u(x, k),
                (true, false) => g[k] += -self.mu / self.slack_l(x, k) + KAPPA_D * self.mu,
                (false, true) => g[k] += self.mu / self.slack_u(x, k) - KAPPA_D * self.mu,
                (false, false) => {}
            }
        }
        g
    }

    fn theta(c: &[f64]) -> f64 {
        c.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn errors(&self, ev: &Eval, mu: f64) -> (f64, f64, f64, f64) {
        let mut rd = vec![0.0; self.n];
        self.jt_times(&ev.jac, &self.y, &mut rd);
        let mut dual: f64 = 0.0;
        let mut compl: f64 = 0.0;
        let mut z_sum = 0.0;
        let mut z_count = 0usize;
        for k in 0..self.n {
            let r = ev.grad[k] + rd[k] - self.zl[k] + self.zu[k];
            dual = dual.max(r.abs());
            if self.has_l[k] {
                compl = compl.max((self.slack_l(&self.x, k) * self.zl[k] - mu).abs());
                z_sum += self.zl[k].abs();
                z_count += 1;
            }
            if self.has_u[k] {
                compl = compl.max((self.slack_u(&self.x, k) * self.zu[k] - mu).abs());
                z_sum += self.zu[k].abs();
                z_count += 1;
            }
        }
        let y_sum: f64 = self.y.iter().map(|v| v.abs()).sum();
        let s_d = (S_MAX.max((y_sum + z_sum) / ((self.m + z_count).max(1) as f64))) / S_MAX;
        let s_c = (S_MAX.max(z_sum / (z_count.max(1) as f64))) / S_MAX;
        let primal = ev.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let dual_scaled = dual / s_d;
        let err = dual_scaled.max(primal).max(compl / s_c);
        (err, primal, dual_scaled, compl / s_c)
    }

    /// Factorizes the KKT matrix with the given diagonal blocks, correcting
    /// the inertia by increasing the primal regularization as needed.
    /// Returns the (possibly regularized) values used.
    fn factor_kkt(&mut self, sigma: &[f64], hess: &[f64], jac: &[f64], delta_c: f64) -> Result<Vec<f64>, StepFailure> {
        let n = self.n;
        let mut vals = Vec::with_capacity(self.kkt_rows.len());
        let mut delta_w = 0.0;
        let mut attempt = 0;
        loop {
            vals.clear();
            vals.extend(sigma.iter().map(|s| s + delta_w));
            vals.extend_from_slice(hess);
            vals.extend_from_slice(jac);
            vals.extend(std::iter::repeat(-delta_c).take(self.m));
            let ok = match self.ldl.factor(&vals) {
                Ok(Inertia { positive, negative }) => positive == n && negative == self.m,
                Err(LdlError::ZeroPivot(_)) => false,
                Err(_) => return Err(StepFailure::Numerical),
            };
            if ok {
                if delta_w > 0.0 {
                    self.delta_w_last = delta_w;
                }
                return Ok(vals);
            }
            attempt += 1;
            delta_w = if attempt == 1 {
                if self.delta_w_last == 0.0 {
                    DELTA_W_INIT
                } else {
                    (KAPPA_W_MINUS * self.delta_w_last).max(DELTA_W_MIN)
                }
            } else if self.delta_w_last == 0.0 {
                KAPPA_W_PLUS_FIRST * delta_w
            } else {
                KAPPA_W_PLUS * delta_w
            };
            if delta_w > DELTA_W_MAX {
                return Err(StepFailure::Numerical);
            }
        }
    }

    /// Solves with the current factorization, refining against `target`
    /// (the KKT values without the constraint regularization).
    fn solve_refined(&self, target: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut sol = rhs.to_vec();
        self.ldl.solve_in_place(&mut sol);
        let resid = |s: &[f64]| {
            let mut ks = vec![0.0; rhs.len()];
            crate::ldl::symmetric_matvec(&self.kkt_rows, &self.kkt_cols, target, s, &mut ks);
            let r: Vec<f64> = rhs.iter().zip(&ks).map(|(b, k)| b - k).collect();
            r
        };
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let bnorm = norm(rhs).max(1e-300);
        let mut r = resid(&sol);
        let mut rnorm = norm(&r);
        for _ in 0..6 {
            if rnorm <= 1e-14 * bnorm {
                break;
            }
            let mut corr = r.clone();
            self.ldl.solve_in_place(&mut corr);
            let trial: Vec<f64> = sol.iter().zip(&corr).map(|(a, b)| a + b).collect();
            let r_trial = resid(&trial);
            let n_trial = norm(&r_trial);
            if !(n_trial < rnorm) {
                break;
            }
            sol = trial;
            r = r_trial;
            rnorm = n_trial;
        }
        sol
    }

    fn max_step(&self, x: &[f64], dx: &[f64], tau: f64) -> f64 {
        let mut alpha: f64 = 1.0;
        for k in 0..self.n {
            if self.has_l[k] && dx[k] < 0.0 {
                alpha = alpha.min(-tau * self.slack_l(x, k) / dx[k]);
            }
            if self.has_u[k] && dx[k] > 0.0 {
                alpha = alpha.min(tau * self.slack_u(x, k) / dx[k]);
            }
        }
        alpha
    }

    fn max_dual_step(z: &[f64], dz: &[f64], active: &[bool], tau: f64) -> f64 {
        let mut alpha: f64 = 1.0;
        for k in 0..z.len() {
            if active[k] && dz[k] < 0.0 {
                alpha = alpha.min(-tau * z[k] / dz[k]);
            }
        }
        alpha
    }

    fn filter_accepts(&self, theta: f64, phi: f64) -> bool {
        self.filter.iter().all(|&(ft, fp)| theta < ft || phi < fp)
    }

    fn bound_dual_steps(&self, x: &[f64], dx: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dzl = vec![0.0; self.n];
        let mut dzu = vec![0.0; self.n];
        for k in 0..self.n {
            if self.has_l[k] {
                let s = self.slack_l(x, k);
                dzl[k] = (self.mu - self.zl[k] * s - self.zl[k] * dx[k]) / s;
            }
            if self.has_u[k] {
                let s = self.slack_u(x, k);
                dzu[k] = (self.mu - self.zu[k] * s + self.zu[k] * dx[k]) / s;
            }
        }
        (dzl, dzu)
    }

    fn sigma(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| {
                let mut s = 0.0;
                if self.has_l[k] {
                    s += self.zl[k] / self.slack_l(x, k);
                }
                if self.has_u[k] {
                    s += self.zu[k] / self.slack_u(x, k);
                }
                s
            })
            .collect()
    }

    /// Least-squares estimate of the constraint multipliers.
    fn least_squares_multipliers(&mut self, ev: &Eval) {
        if self.m == 0 {
            return;
        }
        let sigma = vec![1.0; self.n];
        let hess = vec![0.0; self.hess_map.len()];
        let Ok(vals) = self.factor_kkt(&sigma, &hess, &ev.jac, DELTA_C) else {
            self.y.iter_mut().for_each(|v| *v = 0.0);
            return;
        };
        let mut rhs = vec![0.0; self.n + self.m];
        for k in 0..self.n {
            rhs[k] = -(ev.grad[k] - self.zl[k] + self.zu[k]);
        }
        let mut target = vals;
        let tail = target.len() - self.m;
        target[tail..].iter_mut().for_each(|v| *v = 0.0);
        let sol = self.solve_refined(&target, &rhs);
        let y = &sol[self.n..];
        let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if ymax.is_finite() && ymax <= 1e3 {
            self.y.copy_from_slice(y);
        } else {
            self.y.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn run(&mut self) -> NlpSolution {
        self.started = Instant::now();
        for k in 0..self.n {
            self.zl[k] = if self.has_l[k] { 1.0 } else { 0.0 };
            self.zu[k] = if self.has_u[k] { 1.0 } else { 0.0 };
        }
        let x0 = self.x.clone();
        let mut ev = self.evaluate(&x0);
        if !ev.f.is_finite() || ev.c.iter().any(|v| !v.is_finite()) || ev.grad.iter().any(|v| !v.is_finite()) {
            return self.finish(SolveStatus::Error, &ev);
        }
        self.least_squares_multipliers(&ev);
        let theta0 = Self::theta(&ev.c);
        self.theta_max = 1e4 * theta0.max(1.0);
        self.theta_min = 1e-4 * theta0.max(1.0);

        let tol = self.opts.tolerance;
        let mut acceptable_count = 0usize;
        let mut hess = Vec::new();

        loop {
            let (err0, primal, dual, compl) = self.errors(&ev, 0.0);
            if self.opts.verbose {
                debug!(
                    "iter {:4} obj {:+.10e} inf_pr {:.2e} inf_du {:.2e} compl {:.2e} mu {:.1e} dw {:.1e}",
                    self.iterations,
                    ev.f / self.df,
                    primal,
                    dual,
                    compl,
                    self.mu,
                    self.delta_w_last
                );
            }
            if err0 <= tol {
                return self.finish(SolveStatus::Optimal, &ev);
            }
            if err0 <= self.opts.acceptable_tolerance && primal <= tol {
                acceptable_count += 1;
                if acceptable_count >= self.opts.acceptable_iterations {
                    return self.finish(SolveStatus::FeasibleOnly, &ev);
                }
            } else {
                acceptable_count = 0;
            }
            let timed_out = self.opts.max_wall_time.is_some_and(|t| self.started.elapsed() > t);
            if self.iterations >= self.opts.max_iterations || timed_out {
                let status = if primal <= tol { SolveStatus::FeasibleOnly } else { SolveStatus::IterationLimit };
                return self.finish(status, &ev);
            }

            // Barrier parameter update.
            loop {
                let (err_mu, ..) = self.errors(&ev, self.mu);
                let mu_floor = tol / 10.0;
                if err_mu <= KAPPA_EPS * self.mu && self.mu > mu_floor {
                    self.mu = mu_floor.max((KAPPA_MU * self.mu).min(self.mu.powf(THETA_MU)));
                    self.filter.clear();
                } else {
                    break;
                }
            }

            self.iterations += 1;
            let x = self.x.clone();
            self.eval_hess(&x, &self.y.clone(), &mut hess);
            let sigma = self.sigma(&x);
            let grad_phi = self.barrier_gradient(&x, &ev.grad);
            let delta_c = DELTA_C * self.mu.powf(0.25);
            let vals = match self.factor_kkt(&sigma, &hess, &ev.jac, delta_c) {
                Ok(v) => v,
                Err(_) => return self.finish(SolveStatus::Error, &ev),
            };
            let mut target = vals;
            let tail = target.len() - self.m;
            target[tail..].iter_mut().for_each(|v| *v = 0.0);

            let mut rhs = vec![0.0; self.n + self.m];
            for k in 0..self.n {
                rhs[k] = -grad_phi[k];
            }
            for i in 0..self.m {
                rhs[self.n + i] = -ev.c[i];
            }
            let sol = self.solve_refined(&target, &rhs);
            let dx: Vec<f64> = sol[..self.n].to_vec();
            let dy: Vec<f64> = (0..self.m).map(|i| sol[self.n + i] - self.y[i]).collect();
            if dx.iter().any(|v| !v.is_finite()) {
                return self.finish(SolveStatus::Error, &ev);
            }

            match self.line_search(&ev, &grad_phi, &dx, &dy, &target, &rhs) {
                Ok(new_ev) => ev = new_ev,
                Err(StepFailure::Restoration) => match self.restoration(&ev) {
                    Ok(new_ev) => ev = new_ev,
                    Err(final_ev) => {
                        let primal = final_ev.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                        let status = if primal <= tol { SolveStatus::FeasibleOnly } else { SolveStatus::Infeasible };
                        return self.finish(status, &final_ev);
                    }
                },
                Err(StepFailure::Numerical) => return self.finish(SolveStatus::Error, &ev),
            }
        }
    }

    fn accept_trial(
        &self,
        alpha: f64,
        theta: f64,
        phi: f64,
        grad_phi_dx: f64,
        theta_t: f64,
        phi_t: f64,
    ) -> Option<bool> {
        if !theta_t.is_finite() || !phi_t.is_finite() || theta_t > self.theta_max {
            return None;
        }
        if !self.filter_accepts(theta_t, phi_t) {
            return None;
        }
        let noise = 10.0 * f64::EPSILON * phi.abs();
        let switching =
            grad_phi_dx < 0.0 && alpha * (-grad_phi_dx).powf(S_PHI) > SWITCH_DELTA * theta.powf(S_THETA);
        if theta <= self.theta_min && switching {
            if phi_t - phi <= ETA_PHI * alpha * grad_phi_dx + noise {
                return Some(false);
            }
            return None;
        }
        if theta_t <= (1.0 - GAMMA_THETA) * theta || phi_t - (phi - GAMMA_PHI * theta) <= noise {
            return Some(true);
        }
        None
    }

    fn line_search(
        &mut self,
        ev: &Eval,
        grad_phi: &[f64],
        dx: &[f64],
        dy: &[f64],
        target: &[f64],
        rhs: &[f64],
    ) -> Result<Eval, StepFailure> {
        let x = self.x.clone();
        let tau = TAU_MIN.max(1.0 - self.mu);
        let alpha_max = self.max_step(&x, dx, tau);
        let theta = Self::theta(&ev.c);
        let phi = self.barrier(&x, ev.f);
        let gdx: f64 = grad_phi.iter().zip(dx).map(|(a, b)| a * b).sum();

        // Tiny steps are taken in full.
        let tiny = dx.iter().zip(&x).all(|(d, xv)| d.abs() <= 10.0 * f64::EPSILON * (1.0 + xv.abs()));
        if tiny && theta <= 1e-4 * self.theta_min.max(1e-300).max(theta) {
            let x_new: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + alpha_max * b).collect();
            let new_ev = self.evaluate(&x_new);
            self.commit(&x_new, dx, dy, alpha_max, tau);
            return Ok(new_ev);
        }

        let alpha_min = if gdx < 0.0 {
            if theta <= self.theta_min {
                GAMMA_ALPHA
                    * GAMMA_THETA
                        .min(GAMMA_PHI * theta / (-gdx))
                        .min(SWITCH_DELTA * theta.powf(S_THETA) / (-gdx).powf(S_PHI))
            } else {
                GAMMA_ALPHA * GAMMA_THETA.min(GAMMA_PHI * theta / (-gdx))
            }
        } else {
            GAMMA_ALPHA * GAMMA_THETA
        };

        let mut alpha = alpha_max;
        let mut first = true;
        while alpha >= alpha_min.min(alpha_max) * 0.999 || first {
            let x_t: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + alpha * b).collect();
            let f_t = self.eval_f(&x_t);
            let mut c_t = vec![0.0; self.m];
            self.eval_c(&x_t, &mut c_t);
            let theta_t = Self::theta(&c_t);
            let phi_t = if f_t.is_finite() { self.barrier(&x_t, f_t) } else { f64::NAN };
            if let Some(augment) = self.accept_trial(alpha, theta, phi, gdx, theta_t, phi_t) {
                if augment {
                    self.filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                }
                self.commit(&x_t, dx, dy, alpha, tau);
                return Ok(self.evaluate(&x_t));
            }

            if first && theta_t.is_finite() && theta_t >= theta {
                // Second-order corrections.
                let mut c_soc: Vec<f64> = ev.c.iter().zip(&c_t).map(|(a, b)| alpha * a + b).collect();
                let mut theta_prev = theta_t;
                let mut alpha_soc_base = alpha;
                for _ in 0..MAX_SOC {
                    let mut rhs_soc = rhs.to_vec();
                    for i in 0..self.m {
                        rhs_soc[self.n + i] = -c_soc[i];
                    }
                    let sol = self.solve_refined(target, &rhs_soc);
                    let dx_soc = &sol[..self.n];
                    let alpha_soc = self.max_step(&x, dx_soc, tau);
                    let x_s: Vec<f64> = x.iter().zip(dx_soc).map(|(a, b)| a + alpha_soc * b).collect();
                    let f_s = self.eval_f(&x_s);
                    let mut c_s = vec![0.0; self.m];
                    self.eval_c(&x_s, &mut c_s);
                    let theta_s = Self::theta(&c_s);
                    let phi_s = if f_s.is_finite() { self.barrier(&x_s, f_s) } else { f64::NAN };
                    if let Some(augment) = self.accept_trial(alpha_soc_base, theta, phi, gdx, theta_s, phi_s) {
                        if augment {
                            self.filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                        }
                        let dy_soc: Vec<f64> = (0..self.m).map(|i| sol[self.n + i] - self.y[i]).collect();
                        let dx_soc = dx_soc.to_vec();
                        self.commit(&x_s, &dx_soc, &dy_soc, alpha_soc, tau);
                        return Ok(self.evaluate(&x_s));
                    }
                    if !(theta_s <= KAPPA_SOC * theta_prev) {
                        break;
                    }
                    theta_prev = theta_s;
                    alpha_soc_base = alpha_soc;
                    c_soc = c_soc.iter().zip(&c_s).map(|(a, b)| alpha_soc * a + b).collect();
                }
            }
            first = false;
            alpha *= 0.5;
            if alpha < 1e-16 {
                break;
            }
        }
        Err(StepFailure::Restoration)
    }

    /// Applies an accepted primal step and the matching dual updates.
    fn commit(&mut self, x_new: &[f64], dx: &[f64], dy: &[f64], alpha: f64, tau: f64) {
        let x_old = self.x.clone();
        let (dzl, dzu) = self.bound_dual_steps(&x_old, dx);
        let az = Self::max_dual_step(&self.zl, &dzl, &self.has_l, tau).min(Self::max_dual_step(
            &self.zu,
            &dzu,
            &self.has_u,
            tau,
        ));
        self.x.copy_from_slice(x_new);
        for i in 0..self.m {
            self.y[i] += alpha * dy[i];
        }
        for k in 0..self.n {
            if self.has_l[k] {
                let s = self.slack_l(&self.x, k);
                let z = self.zl[k] + az * dzl[k];
                self.zl[k] = z.clamp(self.mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * self.mu / s);
            }
            if self.has_u[k] {
                let s = self.slack_u(&self.x, k);
                let z = self.zu[k] + az * dzu[k];
                self.zu[k] = z.clamp(self.mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * self.mu / s);
            }
        }
    }

    /// Gauss-Newton minimization of the constraint violation, started when
    /// the filter line search cannot make progress.
    fn restoration(&mut self, ev_start: &Eval) -> Result<Eval, Eval> {
        let theta_r = Self::theta(&ev_start.c);
        let phi_r = self.barrier(&self.x.clone(), ev_start.f);
        self.filter.push(((1.0 - GAMMA_THETA) * theta_r, phi_r - GAMMA_PHI * theta_r));
        let mu_r = 0.0;
        let mut zeta = self.mu.sqrt().max(1e-8);
        let mut ev = ev_start.clone();
        let mut stall = 0usize;
        let hess0 = vec![0.0; self.hess_map.len()];
        let max_iter = 300;
        for _ in 0..max_iter {
            if self.opts.max_wall_time.is_some_and(|t| self.started.elapsed() > t) {
                return Err(ev);
            }
            self.iterations += 1;
            let x = self.x.clone();
            let theta = Self::theta(&ev.c);
            let phi = self.barrier(&x, ev.f);
            if theta <= 0.9 * theta_r && self.filter_accepts(theta, phi) {
                break;
            }
            if theta <= 1e-2 * self.opts.tolerance {
                self.filter.clear();
                break;
            }
            let mut sigma = vec![0.0; self.n];
            let mut gb = vec![0.0; self.n];
            for k in 0..self.n {
                sigma[k] = zeta;
                if self.has_l[k] {
                    let s = self.slack_l(&x, k);
                    sigma[k] += mu_r / (s * s);
                    gb[k] -= mu_r / s;
                }
                if self.has_u[k] {
                    let s = self.slack_u(&x, k);
                    sigma[k] += mu_r / (s * s);
                    gb[k] += mu_r / s;
                }
            }
            let mut vals = Vec::with_capacity(self.kkt_rows.len());
            vals.extend_from_slice(&sigma);
            vals.extend_from_slice(&hess0);
            vals.extend_from_slice(&ev.jac);
            vals.extend(std::iter::repeat(-1.0).take(self.m));
            if self.ldl.factor(&vals).is_err() {
                zeta *= 10.0;
                continue;
            }
            let mut rhs = vec![0.0; self.n + self.m];
            for k in 0..self.n {
                rhs[k] = -gb[k];
            }
            for i in 0..self.m {
                rhs[self.n + i] = -ev.c[i];
            }
            let sol = self.solve_refined(&vals, &rhs);
            let dx = &sol[..self.n];
            let psi = |c: &[f64], xx: &[f64]| -> f64 {
                let mut v = 0.5 * c.iter().map(|a| a * a).sum::<f64>();
                for k in 0..self.n {
                    if self.has_l[k] {
                        v -= mu_r * self.slack_l(xx, k).ln();
                    }
                    if self.has_u[k] {
                        v -= mu_r * self.slack_u(xx, k).ln();
                    }
                }
                v
            };
            let mut jtc = vec![0.0; self.n];
            self.jt_times(&ev.jac, &ev.c, &mut jtc);
            let slope: f64 = (0..self.n).map(|k| (jtc[k] + gb[k]) * dx[k]).sum();
            let psi0 = psi(&ev.c, &x);
            let mut alpha = self.max_step(&x, dx, 0.99);
            let mut accepted = None;
            while alpha > 1e-12 {
                let x_t: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + alpha * b).collect();
                let mut c_t = vec![0.0; self.m];
                self.eval_c(&x_t, &mut c_t);
                let psi_t = psi(&c_t, &x_t);
                if psi_t.is_finite() && psi_t <= psi0 + 1e-4 * alpha * slope.min(0.0) {
                    accepted = Some(x_t);
                    break;
                }
                alpha *= 0.5;
            }
            if self.opts.verbose {
                debug!("resto theta {:.3e} alpha {:.2e} zeta {:.1e} slope {:.2e}", theta, alpha, zeta, slope);
            }
            match accepted {
                Some(x_t) => {
                    let new_ev = self.evaluate(&x_t);
                    let th_new = Self::theta(&new_ev.c);
                    if th_new > (1.0 - 1e-6) * theta {
                        stall += 1;
                    } else {
                        stall = 0;
                    }
                    self.x = x_t;
                    ev = new_ev;
                    zeta = (zeta / 3.0).max(1e-12);
                }
                None => {
                    zeta *= 10.0;
                    stall += 1;
                }
            }
            if stall > 20 || zeta > 1e12 {
                return Err(ev);
            }
        }
        let theta = Self::theta(&ev.c);
        if theta > 0.9 * theta_r && theta > 1e-2 * self.opts.tolerance {
            return Err(ev);
        }
        for k in 0..self.n {
            if self.has_l[k] {
                self.zl[k] = (self.mu / self.slack_l(&self.x, k)).min(1e3);
            }
            if self.has_u[k] {
                self.zu[k] = (self.mu / self.slack_u(&self.x, k)).min(1e3);
            }
        }
        self.least_squares_multipliers(&ev);
        Ok(ev)
    }

    fn finish(&self, status: SolveStatus, ev: &Eval) -> NlpSolution {
        let full = self.full_x(&self.x).clone();
        let mut x = full;
        let n_full = self.n_full;
        // Remove the bound relaxation from the reported point.
        let mut xl = vec![0.0; n_full];
        let mut xu = vec![0.0; n_full];
        self.nlp.variable_bounds(&mut xl, &mut xu);
        for i in 0..n_full {
            x[i] = x[i].clamp(xl[i], xu[i]);
        }
        let objective = self.nlp.objective(&x);
        let mut g = vec![0.0; self.m];
        self.nlp.constraints(&x, &mut g);
        let mut gl = vec![0.0; self.m];
        let mut gu = vec![0.0; self.m];
        self.nlp.constraint_bounds(&mut gl, &mut gu);
        let lambda: Vec<f64> = (0..self.m).map(|i| self.y[i] * self.dc[i] / self.df).collect();

        // Bound multipliers: free variables from the iteration, fixed
        // variables from the stationarity residual.
        let mut z_lower = vec![0.0; n_full];
        let mut z_upper = vec![0.0; n_full];
        for (k, &i) in self.free.iter().enumerate() {
            z_lower[i] = self.zl[k] / self.df;
            z_upper[i] = self.zu[k] / self.df;
        }
        let mut grad = vec![0.0; n_full];
        self.nlp.gradient(&x, &mut grad);
        let js = self.nlp.jacobian_structure();
        let mut jv = vec![0.0; js.len()];
        self.nlp.jacobian_values(&x, &mut jv);
        let mut r = grad;
        for (&(row, col), v) in js.iter().zip(&jv) {
            r[col] += v * lambda[row];
        }
        for i in 0..n_full {
            if xl[i] == xu[i] {
                if r[i] >= 0.0 {
                    z_lower[i] = r[i];
                } else {
                    z_upper[i] = -r[i];
                }
            }
        }
        let mut max_violation: f64 = 0.0;
        let mut scaled: f64 = 0.0;
        for i in 0..self.m {
            let v = (gl[i] - g[i]).max(g[i] - gu[i]).max(0.0);
            max_violation = max_violation.max(v);
            scaled = scaled.max(v * self.dc[i]);
        }
        let (_, _, dual, _) = self.errors(ev, 0.0);
        NlpSolution {
            status,
            x,
            objective,
            constraints: g,
            lambda,
            z_lower,
            z_upper,
            iterations: self.iterations,
            primal_infeasibility: scaled,
            max_violation,
            dual_infeasibility: dual,
            objective_scale: self.df,
            constraint_scale: self.dc.clone(),
        }
    }
}
