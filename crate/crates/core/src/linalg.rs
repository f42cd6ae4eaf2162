//! Tridiagonal solvers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Solve `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i` (`a_0`, `c_{n-1}` unused).
pub fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    if a.len() != n || b.len() != n || c.len() != n {
        return Err(Error::LinearSolve("band lengths differ"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut denom = b[0];
    if denom == 0.0 {
        return Err(Error::LinearSolve("zero pivot"));
    }
    cp[0] = c[0] / denom;
    dp[0] = d[0] / denom;
    for i in 1..n {
        denom = b[i] - a[i] * cp[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::LinearSolve("zero pivot"));
        }
        cp[i] = c[i] / denom;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Ok(x)
}

/// Periodic tridiagonal system: row 0 couples to `x_{n-1}` through `a_0` and
/// row `n-1` to `x_0` through `c_{n-1}` (Sherman-Morrison).
pub fn cyclic_thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    if n < 3 {
        return Err(Error::LinearSolve("cyclic system needs at least 3 rows"));
    }
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] = b[0] - gamma;
    bb[n - 1] = b[n - 1] - a[0] * c[n - 1] / gamma;
    let x = thomas(a, &bb, c, d)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c[n - 1];
    let z = thomas(a, &bb, c, &u)?;
    let fact = (x[0] + a[0] * x[n - 1] / gamma) / (1.0 + z[0] + a[0] * z[n - 1] / gamma);
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(a: &[f64], b: &[f64], c: &[f64], x: &[f64], cyclic: bool) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut v = b[i] * x[i];
                if i > 0 {
                    v += a[i] * x[i - 1];
                } else if cyclic {
                    v += a[0] * x[n - 1];
                }
                if i + 1 < n {
                    v += c[i] * x[i + 1];
                } else if cyclic {
                    v += c[n - 1] * x[0];
                }
                v
            })
            .collect()
    }

    #[test]
    fn solves_random_systems() {
        let n = 9;
        let a: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
        let c: Vec<f64> = (0..n).map(|i| 0.7 - 0.05 * i as f64).collect();
        let b = vec![4.0; n];
        let x: Vec<f64> = (0..n).map(|i| libm::sin(i as f64)).collect();
        for cyclic in [false, true] {
            let d = apply(&a, &b, &c, &x, cyclic);
            let y = if cyclic {
                cyclic_thomas(&a, &b, &c, &d).unwrap()
            } else {
                thomas(&a, &b, &c, &d).unwrap()
            };
            for (p, q) in x.iter().zip(&y) {
                assert!((p - q).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_pivot_is_an_error() {
        assert!(thomas(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]).is_err());
    }
}
