//! Sparse symmetric LDLᵀ factorization for quasi-definite KKT systems.
//!
//! The numeric phase is an up-looking elimination without pivoting, so the
//! caller must supply a matrix whose leading principal minors (after the
//! fill-reducing permutation) are nonsingular. Interior-point KKT matrices
//! with a small negative regularization on the constraint block satisfy
//! this. The signs of `D` give the inertia of the matrix.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdlError {
    #[error("entry ({row}, {col}) outside a {n}x{n} matrix")]
    OutOfRange { row: usize, col: usize, n: usize },
    #[error("fill-reducing ordering failed")]
    Ordering,
    #[error("zero pivot at permuted column {0}")]
    ZeroPivot(usize),
    #[error("value slice has length {got}, pattern has {expected} entries")]
    ValueLength { got: usize, expected: usize },
}

/// Number of positive and negative pivots of a successful factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
}

const UNKNOWN: usize = usize::MAX;

/// Pivots smaller than this in magnitude are reported as zero.
const PIVOT_FLOOR: f64 = 1e-200;

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    // Permuted upper-triangular pattern (CSC), diagonal always present.
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    // Slot in `ax` for every entry the caller supplies.
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    factored: bool,
}

impl LdlFactor {
    /// Symbolic analysis of the symmetric matrix whose nonzeros are listed in
    /// `(rows[k], cols[k])`. Entries may come from either triangle; an entry
    /// and its transpose refer to the same matrix element and are summed.
    pub fn analyze(n: usize, rows: &[usize], cols: &[usize]) -> Result<Self, LdlError> {
        assert_eq!(rows.len(), cols.len());
        for (&r, &c) in rows.iter().zip(cols) {
            if r >= n || c >= n {
                return Err(LdlError::OutOfRange { row: r, col: c, n });
            }
        }
        let (perm, pinv) = fill_reducing_order(n, rows, cols)?;

        // Upper-triangular permuted pattern with the diagonal forced in.
        let mut cols_of: Vec<Vec<usize>> = vec![Vec::new(); n];
        for j in 0..n {
            cols_of[j].push(j);
        }
        let mut targets = Vec::with_capacity(rows.len());
        for (&r, &c) in rows.iter().zip(cols) {
            let (pr, pc) = (pinv[r], pinv[c]);
            let (i, j) = if pr <= pc { (pr, pc) } else { (pc, pr) };
            cols_of[j].push(i);
            targets.push((i, j));
        }
        let mut ap = Vec::with_capacity(n + 1);
        let mut ai = Vec::new();
        ap.push(0);
        for col in cols_of.iter_mut() {
            col.sort_unstable();
            col.dedup();
            ai.extend_from_slice(col);
            ap.push(ai.len());
        }
        let map = targets
            .iter()
            .map(|&(i, j)| {
                let slice = &ai[ap[j]..ap[j + 1]];
                ap[j] + slice.binary_search(&i).expect("entry present in pattern")
            })
            .collect();

        // Elimination tree and column counts of L.
        let mut work = vec![0usize; n];
        let mut lnz = vec![0usize; n];
        let mut etree = vec![UNKNOWN; n];
        for j in 0..n {
            work[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                let mut i = row;
                while work[i] != j {
                    if etree[i] == UNKNOWN {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = Vec::with_capacity(n + 1);
        lp.push(0);
        for &c in &lnz {
            let last = *lp.last().unwrap();
            lp.push(last + c);
        }
        let total = *lp.last().unwrap();
        let nnz = ai.len();
        Ok(Self {
            n,
            perm,
            ap,
            ai,
            ax: vec![0.0; nnz],
            map,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            factored: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in the strictly lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.li.len()
    }

    /// Numeric factorization with values listed in the same order as the
    /// entries passed to [`LdlFactor::analyze`].
    pub fn factor(&mut self, values: &[f64]) -> Result<Inertia, LdlError> {
        if values.len() != self.map.len() {
            return Err(LdlError::ValueLength {
                got: values.len(),
                expected: self.map.len(),
            });
        }
        self.factored = false;
        self.ax.iter_mut().for_each(|v| *v = 0.0);
        for (&slot, &v) in self.map.iter().zip(values) {
            self.ax[slot] += v;
        }
        let n = self.n;
        let mut y_used = vec![false; n];
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        let mut inertia = Inertia { positive: 0, negative: 0 };

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                y_vals[b] = self.ax[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut n_e = 1;
                    let mut next = self.etree[b];
                    while next != UNKNOWN && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[n_e] = next;
                        n_e += 1;
                        next = self.etree[next];
                    }
                    while n_e > 0 {
                        n_e -= 1;
                        y_idx[nnz_y] = elim[n_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let slot = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..slot {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[slot] = k;
                let l = yc * self.dinv[c];
                self.lx[slot] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            let dk = self.d[k];
            if !(dk.abs() > PIVOT_FLOOR) {
                return Err(LdlError::ZeroPivot(k));
            }
            if dk > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            self.dinv[k] = 1.0 / dk;
        }
        self.factored = true;
        Ok(inertia)
    }

    /// Solves `A x = b` in place using the last successful factorization.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "solve called before a successful factorization");
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..self.n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.dinv) {
            *xi *= di;
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }
}

fn fill_reducing_order(
    n: usize,
    rows: &[usize],
    cols: &[usize],
) -> Result<(Vec<usize>, Vec<usize>), LdlError> {
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (&r, &c) in rows.iter().zip(cols) {
        if r != c {
            adj[c].push(r);
            adj[r].push(c);
        }
    }
    let mut a_p = Vec::with_capacity(n + 1);
    let mut a_i = Vec::new();
    a_p.push(0);
    for (j, col) in adj.iter_mut().enumerate() {
        col.push(j);
        col.sort_unstable();
        col.dedup();
        a_i.extend_from_slice(col);
        a_p.push(a_i.len());
    }
    let (p, pinv, _info) =
        amd::order::<usize>(n, &a_p, &a_i, &amd::Control::default()).map_err(|_| LdlError::Ordering)?;
    Ok((p, pinv))
}

/// y += A x for a symmetric matrix given as (row, col, value) triplets where
/// each listed entry stands for both (row, col) and (col, row).
pub fn symmetric_matvec(rows: &[usize], cols: &[usize], vals: &[f64], x: &[f64], y: &mut [f64]) {
    for ((&r, &c), &v) in rows.iter().zip(cols).zip(vals) {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
}
