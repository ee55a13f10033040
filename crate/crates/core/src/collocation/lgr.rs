//! Legendre-Gauss-Radau points, weights and differentiation matrices.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("LGR order must be at least 1, got {0}")]
pub struct OrderError(pub usize);

/// An `n`-point LGR rule on `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LgrRule {
    pub n: usize,
    /// Collocation points; `nodes[0] == -1`.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row-major `n × (n+1)` matrix acting on values at `support()`.
    pub diff: Vec<f64>,
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = if (x * x - 1.0).abs() < 1e-300 {
        0.5 * (n * (n + 1)) as f64 * x.powi(n as i32 + 1)
    } else {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, dp)
}

impl LgrRule {
    pub fn new(n: usize) -> Result<Self, OrderError> {
        if n == 0 {
            return Err(OrderError(0));
        }
        let mut nodes = vec![-1.0];
        // Roots of P_{n-1} + P_n other than -1, by Newton from Chebyshev-Radau guesses.
        for j in 1..n {
            let mut x = -(2.0 * std::f64::consts::PI * j as f64 / (2 * n - 1) as f64).cos();
            for _ in 0..100 {
                let (a, da) = legendre(n - 1, x);
                let (b, db) = legendre(n, x);
                let dx = (a + b) / (da + db);
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes.push(x);
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nf = n as f64;
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                if j == 0 {
                    2.0 / (nf * nf)
                } else {
                    let p = legendre(n - 1, x).0;
                    (1.0 - x) / (nf * nf * p * p)
                }
            })
            .collect();
        let mut support = nodes.clone();
        support.push(1.0);
        let diff = differentiation_matrix(&support, &nodes);
        Ok(Self { n, nodes, weights, diff })
    }

    /// Nodes followed by the right endpoint `+1`.
    pub fn support(&self) -> Vec<f64> {
        let mut s = self.nodes.clone();
        s.push(1.0);
        s
    }

    pub fn d(&self, row: usize, col: usize) -> f64 {
        self.diff[row * (self.n + 1) + col]
    }
}

fn barycentric_weights(support: &[f64]) -> Vec<f64> {
    (0..support.len())
        .map(|j| {
            let prod: f64 = (0..support.len()).filter(|&k| k != j).map(|k| support[j] - support[k]).product();
            1.0 / prod
        })
        .collect()
}

/// Derivative of the interpolant through `support`, evaluated at `at`.
/// Row-major `at.len() × support.len()`.
pub fn differentiation_matrix(support: &[f64], at: &[f64]) -> Vec<f64> {
    let m = support.len();
    let bw = barycentric_weights(support);
    let mut d = vec![0.0; at.len() * m];
    for (i, &x) in at.iter().enumerate() {
        if let Some(node) = support.iter().position(|&s| s == x) {
            let mut diag = 0.0;
            for j in 0..m {
                if j != node {
                    let v = bw[j] / bw[node] / (x - support[j]);
                    d[i * m + j] = v;
                    diag -= v;
                }
            }
            d[i * m + node] = diag;
        } else {
            let lw = lagrange_weights(support, x);
            // l_j'(x) = l_j(x) · Σ_{k≠j} 1/(x - s_k)
            for j in 0..m {
                let s: f64 = (0..m).filter(|&k| k != j).map(|k| 1.0 / (x - support[k])).sum();
                d[i * m + j] = lw[j] * s;
            }
        }
    }
    d
}

/// Values of the Lagrange basis polynomials of `support` at `x`.
pub fn lagrange_weights(support: &[f64], x: f64) -> Vec<f64> {
    if let Some(node) = support.iter().position(|&s| s == x) {
        let mut w = vec![0.0; support.len()];
        w[node] = 1.0;
        return w;
    }
    (0..support.len())
        .map(|j| {
            (0..support.len())
                .filter(|&k| k != j)
                .map(|k| (x - support[k]) / (support[j] - support[k]))
                .product()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn low_orders() {
        let r1 = LgrRule::new(1).unwrap();
        assert_eq!(r1.nodes, vec![-1.0]);
        assert_eq!(r1.weights, vec![2.0]);
        let r2 = LgrRule::new(2).unwrap();
        assert_abs_diff_eq!(r2.nodes[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[1], 1.5, epsilon = 1e-15);
        let r3 = LgrRule::new(3).unwrap();
        let s6 = 6f64.sqrt();
        assert_abs_diff_eq!(r3.nodes[1], (1.0 - s6) / 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r3.nodes[2], (1.0 + s6) / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_order_rejected() {
        assert_eq!(LgrRule::new(0), Err(OrderError(0)));
    }
}
