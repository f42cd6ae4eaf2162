//! Time-step policies and snapshot schedules shared by the solvers.

use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// How a solver picks its step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    /// Constant step, shortened only to land on snapshot times.
    Fixed(f64),
    /// Largest stable step scaled by this Courant number.
    Cfl(f64),
}

impl TimeStep {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeStep::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => Err(invalid("dt", "must be positive")),
            TimeStep::Cfl(c) if !(c > 0.0 && c <= 0.9) => Err(invalid("cfl", "must lie in (0, 0.9]")),
            _ => Ok(()),
        }
    }

    /// Step to take given the solver's stable bound `dt_max` at Courant
    /// number 1.
    pub fn resolve(&self, dt_max: f64) -> f64 {
        match *self {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Cfl(c) => c * dt_max,
        }
    }
}

/// Sorted, deduplicated snapshot times in `[0, inf)`.
pub fn snapshot_times(times: &[f64]) -> Result<Vec<f64>> {
    if times.is_empty() {
        return Err(invalid("snapshot_times", "at least one time is required"));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(invalid("snapshot_times", "times must be finite and nonnegative"));
    }
    let mut v = times.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    Ok(v)
}

/// `n` equally spaced times from `0` to `t_final` inclusive.
pub fn equally_spaced(t_final: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return alloc::vec![t_final];
    }
    (0..n).map(|k| t_final * k as f64 / (n - 1) as f64).collect()
}

/// Shorten `dt` so that `t + dt` does not overshoot `target`; returns the step
/// and whether the target is reached.
pub fn clip_step(t: f64, target: f64, dt: f64) -> (f64, bool) {
    let remaining = target - t;
    if dt >= remaining * (1.0 - 1e-9) {
        (remaining, true)
    } else {
        (dt, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn times_are_sorted_and_unique() {
        assert_eq!(snapshot_times(&[0.5, 0.0, 0.5, 0.25]).unwrap(), [0.0, 0.25, 0.5]);
        assert!(snapshot_times(&[]).is_err());
        assert!(snapshot_times(&[-1.0]).is_err());
        assert_eq!(equally_spaced(1.5, 4), [0.0, 0.5, 1.0, 1.5]);
    }

    #[test]
    fn clipping_lands_on_targets() {
        assert_eq!(clip_step(0.0, 1.0, 0.3), (0.3, false));
        assert!(clip_step(0.9, 1.0, 0.3).1);
        let (dt, hit) = clip_step(0.2, 0.3, 0.1);
        assert!(hit && (dt - 0.1).abs() < 1e-15);
        assert!(TimeStep::Cfl(0.95).validate().is_err());
        assert!(TimeStep::Fixed(0.0).validate().is_err());
    }
}
