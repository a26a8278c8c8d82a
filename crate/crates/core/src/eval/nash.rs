use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NASH_EPS: f64 = 1e-4;
pub const DEFAULT_NASH_ITERATIONS: usize = 2_000_000;
/// Largest side the exact kernel enumeration accepts.
pub const EXACT_MAX_SIDE: usize = 6;
const CHECK_EVERY: usize = 64;

/// Mixed strategies for the row (maximizing) and column player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `x^T A y`
    pub value: f64,
    /// Largest gain either player could get by deviating.
    pub exploitability: f64,
    pub iterations: usize,
}

fn check_matrix(a: &[Vec<f64>]) -> Result<(usize, usize)> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    if m == 0 || n == 0 || a.iter().any(|r| r.len() != n) {
        return Err(Error::Domain("payoff matrix must be a nonempty rectangle".into()));
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("payoff matrix entry".into()));
    }
    Ok((m, n))
}

fn row_payoffs(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(y).map(|(v, q)| v * q).sum()).collect()
}

fn col_payoffs(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let n = a[0].len();
    (0..n).map(|j| a.iter().zip(x).map(|(r, p)| r[j] * p).sum()).collect()
}

/// `(value, row gain, column gain)`: `max_i (Ay)_i - v` and `v - min_j (x^T A)_j`.
pub fn equilibrium_gaps(a: &[Vec<f64>], x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let ay = row_payoffs(a, y);
    let v: f64 = ay.iter().zip(x).map(|(u, p)| u * p).sum();
    let best_row = ay.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best_col = col_payoffs(a, x).into_iter().fold(f64::INFINITY, f64::min);
    (v, best_row - v, v - best_col)
}

fn normalize_or_uniform(q: &[f64], out: &mut [f64]) {
    let s: f64 = q.iter().sum();
    if s > 0.0 {
        out.iter_mut().zip(q).for_each(|(o, v)| *o = v / s);
    } else {
        let u = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|o| *o = u);
    }
}

fn solution(a: &[Vec<f64>], x: Vec<f64>, y: Vec<f64>, iterations: usize) -> NashSolution {
    let (value, gr, gc) = equilibrium_gaps(a, &x, &y);
    NashSolution {
        x,
        y,
        value,
        exploitability: gr.max(gc),
        iterations,
    }
}

/// Regret-matching+ with alternating updates and linearly weighted averages.
/// Succeeds only once the averaged strategies certify an `eps`-equilibrium.
pub fn nash_solve(a: &[Vec<f64>], eps: f64) -> Result<NashSolution> {
    nash_solve_capped(a, eps, DEFAULT_NASH_ITERATIONS)
}

pub fn nash_solve_capped(a: &[Vec<f64>], eps: f64, max_iterations: usize) -> Result<NashSolution> {
    let (m, n) = check_matrix(a)?;
    let mut qx = vec![0.0; m];
    let mut qy = vec![0.0; n];
    let mut x = vec![0.0; m];
    let mut y = vec![0.0; n];
    let mut sx = vec![0.0; m];
    let mut sy = vec![0.0; n];
    let mut last = f64::INFINITY;
    for t in 1..=max_iterations {
        normalize_or_uniform(&qx, &mut x);
        normalize_or_uniform(&qy, &mut y);
        // column player minimizes x^T A y
        let uy: Vec<f64> = col_payoffs(a, &x).into_iter().map(|v| -v).collect();
        let ey: f64 = uy.iter().zip(&y).map(|(u, p)| u * p).sum();
        qy.iter_mut().zip(&uy).for_each(|(q, u)| *q = (*q + u - ey).max(0.0));
        normalize_or_uniform(&qy, &mut y);
        let ux = row_payoffs(a, &y);
        let ex: f64 = ux.iter().zip(&x).map(|(u, p)| u * p).sum();
        qx.iter_mut().zip(&ux).for_each(|(q, u)| *q = (*q + u - ex).max(0.0));

        let w = t as f64;
        sx.iter_mut().zip(&x).for_each(|(s, p)| *s += w * p);
        sy.iter_mut().zip(&y).for_each(|(s, p)| *s += w * p);
        if t % CHECK_EVERY == 0 || t == max_iterations {
            let total: f64 = sx.iter().sum();
            let ax: Vec<f64> = sx.iter().map(|s| s / total).collect();
            let total: f64 = sy.iter().sum();
            let ay: Vec<f64> = sy.iter().map(|s| s / total).collect();
            let sol = solution(a, ax, ay, t);
            last = sol.exploitability;
            if sol.exploitability <= eps {
                return Ok(sol);
            }
        }
    }
    Err(Error::NoCertificate {
        iterations: max_iterations,
        exploitability: last,
        epsilon: eps,
    })
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Solves `[M -1; 1^T 0] [p; v] = [0; 1]`.
fn kernel_solve(m: &DMatrix<f64>) -> Option<(DVector<f64>, f64)> {
    let k = m.nrows();
    let mut b = DMatrix::zeros(k + 1, k + 1);
    b.view_mut((0, 0), (k, k)).copy_from(m);
    for i in 0..k {
        b[(i, k)] = -1.0;
        b[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = b.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, k).into_owned(), sol[k]))
}

/// Exact solution by enumerating square kernels (equal-size supports).
/// Intended as a reference for small games.
pub fn nash_exact(a: &[Vec<f64>]) -> Result<NashSolution> {
    let (m, n) = check_matrix(a)?;
    if m > EXACT_MAX_SIDE || n > EXACT_MAX_SIDE {
        return Err(Error::Domain(format!(
            "exact solver handles at most {EXACT_MAX_SIDE}x{EXACT_MAX_SIDE}, got {m}x{n}"
        )));
    }
    let scale = a.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-9 * scale;
    for k in 1..=m.min(n) {
        for rows in subsets(m, k) {
            for cols in subsets(n, k) {
                let sub = DMatrix::from_fn(k, k, |i, j| a[rows[i]][cols[j]]);
                let Some((ys, v)) = kernel_solve(&sub) else { continue };
                let Some((xs, v2)) = kernel_solve(&sub.transpose()) else { continue };
                if (v - v2).abs() > tol || ys.iter().chain(xs.iter()).any(|p| *p < -tol) {
                    continue;
                }
                let mut x = vec![0.0; m];
                let mut y = vec![0.0; n];
                rows.iter().zip(xs.iter()).for_each(|(&i, p)| x[i] = p.max(0.0));
                cols.iter().zip(ys.iter()).for_each(|(&j, p)| y[j] = p.max(0.0));
                let sol = solution(a, x, y, 0);
                if sol.exploitability <= 1e-7 * scale {
                    return Ok(sol);
                }
            }
        }
    }
    Err(Error::Domain("no kernel produced an equilibrium".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rps() -> Vec<Vec<f64>> {
        vec![vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0], vec![-1.0, 1.0, 0.0]]
    }

    #[test]
    fn rps_is_uniform() {
        for sol in [nash_solve(&rps(), DEFAULT_NASH_EPS).unwrap(), nash_exact(&rps()).unwrap()] {
            assert!(sol.value.abs() <= 1e-4);
            for p in sol.x.iter().chain(&sol.y) {
                assert!((p - 1.0 / 3.0).abs() < 1e-3, "{sol:?}");
            }
        }
    }

    #[test]
    fn dominant_row_is_pure() {
        let a = vec![vec![0.5, 0.8], vec![0.1, 0.2]];
        let sol = nash_exact(&a).unwrap();
        assert_eq!(sol.x, vec![1.0, 0.0]);
        assert!((sol.value - 0.5).abs() < 1e-12);
        let it = nash_solve(&a, DEFAULT_NASH_EPS).unwrap();
        assert!(it.x[0] > 0.999);
        assert!((it.value - 0.5).abs() < 1e-4);
    }

    #[test]
    fn cap_without_certificate_fails_loudly() {
        let a = vec![vec![0.3, -0.7, 0.9], vec![0.2, 0.5, -0.4], vec![-0.6, 0.1, 0.8]];
        assert!(matches!(nash_solve_capped(&a, 1e-12, 64), Err(Error::NoCertificate { .. })));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(nash_solve(&[vec![f64::NAN]], 1e-4).is_err());
        assert!(nash_exact(&vec![vec![0.0; 7]; 7]).is_err());
    }
}
