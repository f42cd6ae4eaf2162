//! Ordinary least-squares line fits.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope (zero for two points).
    pub slope_stderr: f64,
    pub n: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return Err(invalid("fit", "need at least two paired points"));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(invalid("fit", "abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = if n > 2 { libm::sqrt(sse / (nf - 2.0) / sxx) } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
        n,
    })
}

/// Slope of `log v` against `log eps`.
pub fn log_log_fit(eps: &[f64], values: &[f64]) -> Result<LinearFit> {
    if eps.iter().chain(values).any(|v| !(*v > 0.0)) {
        return Err(invalid("fit", "log-log fit needs positive data"));
    }
    let lx: alloc::vec::Vec<f64> = eps.iter().map(|e| libm::log(*e)).collect();
    let ly: alloc::vec::Vec<f64> = values.iter().map(|v| libm::log(*v)).collect();
    linear_fit(&lx, &ly)
}
