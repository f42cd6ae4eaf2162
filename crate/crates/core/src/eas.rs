//! Pressureless Euler-alignment system on the torus.
//!
//! `rho` is advanced by a conservative upwind scheme with face velocities
//! `(u_i + u_{i+1}) / 2`; `u` by upwind advection with the local damping
//! `u rho_phi` taken implicitly:
//! `u^{n+1} (1 + dt rho_phi^n) = u^n - dt u^n d_x u^n + dt (u^n rho^n)_phi`.
//! Both updates commute with reflections of the grid, so symmetric data stays
//! symmetric to round-off.

use alloc::vec::Vec;

use crate::domain::{quadrature_x, DiagnosticsRecord, Field, MacroState, Quantity, TorusGrid};
use crate::error::{invalid, Error, Result};
use crate::kernels::{convolve_periodic, KernelSpec};
use crate::metrics::centered_derivative;
use crate::schedule::{clip_step, snapshot_times, TimeStep};

/// Courant number above which a step is rejected.
pub const CFL_LIMIT: f64 = 0.9;
/// Default abort threshold on `max |d_x u|`.
pub const BLOWUP_GRADIENT: f64 = 1e3;

/// Macroscopic state with cached convolutions `rho_phi`, `(u rho)_phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct EasState {
    pub state: MacroState,
    pub rho_phi: Field,
    pub urho_phi: Field,
}

impl EasState {
    pub fn t(&self) -> f64 {
        self.state.t
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.state.grid
    }

    /// `e = d_x u + rho_phi`, with the centred derivative.
    pub fn e(&self) -> Field {
        centered_derivative(&self.state.grid, &self.state.u)
            .iter()
            .zip(&self.rho_phi)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Face velocities `a_{i+1/2} = (u_i + u_{i+1}) / 2`.
pub fn face_velocities(u: &[f64]) -> Field {
    let n = u.len();
    (0..n).map(|i| 0.5 * (u[i] + u[(i + 1) % n])).collect()
}

/// Conservative upwind transport of `q` by the face velocities over `dt`.
pub fn upwind_transport(q: &[f64], faces: &[f64], dt_over_dx: f64, out: &mut [f64]) {
    let n = q.len();
    let flux = |i: usize| {
        let a = faces[i];
        let next = if i + 1 == n { 0 } else { i + 1 };
        if a > 0.0 {
            a * q[i]
        } else {
            a * q[next]
        }
    };
    let mut left = flux(n - 1);
    for i in 0..n {
        let right = flux(i);
        out[i] = q[i] - dt_over_dx * (right - left);
        left = right;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EasSolver {
    grid: TorusGrid,
    phi: KernelSpec,
    kernel: Field,
    pub blowup_gradient: f64,
}

/// Snapshots and diagnostics of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EasRun {
    pub snapshots: Vec<EasState>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub steps: usize,
}

impl EasSolver {
    pub fn new(grid: TorusGrid, phi: KernelSpec) -> Self {
        Self {
            grid,
            phi,
            kernel: phi.tabulate(&grid),
            blowup_gradient: BLOWUP_GRADIENT,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.phi
    }

    pub fn convolve(&self, f: &[f64]) -> Result<Field> {
        convolve_periodic(&self.grid, f, &self.kernel)
    }

    pub fn state(&self, rho: Field, u: Field, t: f64) -> Result<EasState> {
        let mut state = MacroState::new(self.grid, rho, u)?;
        state.t = t;
        if state.rho.iter().chain(&state.u).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial data"));
        }
        self.with_caches(state)
    }

    fn with_caches(&self, state: MacroState) -> Result<EasState> {
        let rho_phi = self.convolve(&state.rho)?;
        let flux: Field = state.rho.iter().zip(&state.u).map(|(r, u)| r * u).collect();
        let urho_phi = self.convolve(&flux)?;
        Ok(EasState {
            state,
            rho_phi,
            urho_phi,
        })
    }

    /// Step at Courant number one: `dx / max |u|`.
    pub fn stable_dt(&self, s: &EasState) -> f64 {
        let umax = s.state.u.iter().fold(0.0f64, |m, u| m.max(u.abs()));
        if umax > 0.0 {
            self.grid.dx() / umax
        } else {
            f64::INFINITY
        }
    }

    pub fn step(&self, s: &EasState, dt: f64) -> Result<EasState> {
        if !(dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        let dx = self.grid.dx();
        let number = dt / self.stable_dt(s);
        if number > CFL_LIMIT {
            return Err(Error::Cfl {
                direction: "x",
                number,
                limit: CFL_LIMIT,
            });
        }
        let (rho, u) = (&s.state.rho, &s.state.u);
        let n = rho.len();

        let faces = face_velocities(u);
        let mut rho_new = vec_zeros(n);
        upwind_transport(rho, &faces, dt / dx, &mut rho_new);

        let mut u_new = vec_zeros(n);
        for i in 0..n {
            let ui = u[i];
            let grad = if ui > 0.0 {
                (ui - u[(i + n - 1) % n]) / dx
            } else {
                (u[(i + 1) % n] - ui) / dx
            };
            u_new[i] = (ui - dt * ui * grad + dt * s.urho_phi[i]) / (1.0 + dt * s.rho_phi[i]);
        }

        let gmax = (0..n)
            .map(|i| (u_new[(i + 1) % n] - u_new[i]).abs() / dx)
            .fold(0.0, f64::max);
        if !(gmax <= self.blowup_gradient) {
            return Err(Error::BlowUp { max_gradient: gmax });
        }
        if rho_new.iter().chain(&u_new).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("eas step"));
        }
        let state = MacroState {
            grid: self.grid,
            rho: rho_new,
            u: u_new,
            m: None,
            t: s.state.t + dt,
        };
        if let Some((cell, &value)) = state.rho.iter().enumerate().find(|(_, r)| **r < 0.0) {
            return Err(Error::NegativeMarginal { cell, value });
        }
        self.with_caches(state)
    }

    pub fn diagnostics(&self, s: &EasState) -> Result<DiagnosticsRecord> {
        let e = s.e();
        let mut d = DiagnosticsRecord::new(s.t());
        d.set(Quantity::Mass, s.state.mass())?;
        d.set(Quantity::Momentum, s.state.momentum())?;
        d.set(Quantity::Energy, s.state.energy())?;
        d.set(Quantity::EMin, e.iter().copied().fold(f64::INFINITY, f64::min))?;
        d.set(Quantity::EMax, e.iter().copied().fold(f64::NEG_INFINITY, f64::max))?;
        d.set(Quantity::ETotal, quadrature_x(&self.grid, &e))?;
        Ok(d)
    }

    /// March from `initial` through the requested snapshot times.
    pub fn run(&self, initial: EasState, times: &[f64], policy: TimeStep) -> Result<EasRun> {
        policy.validate()?;
        let times = snapshot_times(times)?;
        let mut s = initial;
        let mut snapshots = Vec::with_capacity(times.len());
        let mut diagnostics = Vec::with_capacity(times.len());
        let mut steps = 0;
        for &target in &times {
            if target < s.t() - 1e-12 {
                return Err(Error::TimeRange {
                    t: target,
                    start: s.t(),
                    end: f64::INFINITY,
                });
            }
            while s.t() < target - 1e-12 {
                let (dt, hit) = clip_step(s.t(), target, policy.resolve(self.stable_dt(&s)));
                s = self.step(&s, dt)?;
                if hit {
                    s.state.t = target;
                }
                steps += 1;
            }
            diagnostics.push(self.diagnostics(&s)?);
            snapshots.push(s.clone());
        }
        Ok(EasRun {
            snapshots,
            diagnostics,
            steps,
        })
    }
}

fn vec_zeros(n: usize) -> Field {
    alloc::vec![0.0; n]
}

/// `max_y |rho(x*+y) - rho(x*-y)| + |u(x*+y) + u(x*-y)|` over the cell centres
/// `x* + y`, with the reflected values interpolated linearly.
pub fn symmetry_residual(state: &MacroState, x_star: f64) -> f64 {
    let g = &state.grid;
    (0..g.len())
        .map(|i| {
            let x = g.center(i);
            let mirror = 2.0 * x_star - x;
            (state.rho[i] - g.interpolate(&state.rho, mirror)).abs()
                + (state.u[i] + g.interpolate(&state.u, mirror)).abs()
        })
        .fold(0.0, f64::max)
}

/// Time series of `int e` and `min e` along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EReport {
    pub times: Vec<f64>,
    pub e_total: Vec<f64>,
    pub e_min: Vec<f64>,
    /// `max_t |int e(t) - int e(0)| / t`.
    pub drift_rate: f64,
}

pub fn e_evolution_check(trajectory: &[EasState]) -> EReport {
    let mut report = EReport {
        times: Vec::new(),
        e_total: Vec::new(),
        e_min: Vec::new(),
        drift_rate: 0.0,
    };
    for s in trajectory {
        let e = s.e();
        report.times.push(s.t());
        report.e_total.push(quadrature_x(s.grid(), &e));
        report.e_min.push(e.iter().copied().fold(f64::INFINITY, f64::min));
    }
    if let (Some(&t0), Some(&e0)) = (report.times.first(), report.e_total.first()) {
        report.drift_rate = report
            .times
            .iter()
            .zip(&report.e_total)
            .filter(|(t, _)| **t > t0)
            .map(|(t, e)| (e - e0).abs() / (t - t0))
            .fold(0.0, f64::max);
    }
    report
}

/// Initial velocity profiles of the reference experiments on the unit torus.
pub mod initial {
    use core::f64::consts::PI;

    /// `cos(2 pi x) / (3 pi)`: odd about its zeros `1/4` and `3/4`.
    pub fn symmetric(x: f64) -> f64 {
        libm::cos(2.0 * PI * x) / (3.0 * PI)
    }

    /// Six-mode profile without odd symmetry about its zeros.
    pub fn asymmetric(x: f64) -> f64 {
        let s = |k: f64| libm::sin(2.0 * PI * k * x);
        let c = |k: f64| libm::cos(2.0 * PI * k * x);
        0.25 * (s(1.0) / (2.0 * PI)
            + c(1.0) / (3.0 * PI)
            + s(2.0) / (2.0 * PI)
            + c(2.0) / (4.0 * PI)
            + s(3.0) / (8.0 * PI)
            + c(3.0) / (5.0 * PI))
    }
}
