//! Modulated Vlasov-alignment system
//! `d_t g + d_x((omega xi + m) g) = d_xi((xi d_x m + xi rho_phi) g)` with
//! `omega = eps e^{-t/eps}` and the modulated velocity `m` relaxing to
//! `u = m + omega J / rho`, `J = int xi g`.
//!
//! The relaxation `(u - m) / eps` is taken at the new level; since
//! `u^{n+1} - m^{n+1} = omega^{n+1} J^{n+1} / rho^{n+1}` it reduces to the
//! bounded source `e^{-t/eps} J / rho`, so the step size does not depend on
//! `eps`.

use alloc::vec::Vec;

use crate::domain::{quadrature_x, DiagnosticsRecord, Field, PhaseGrid, Profile, Quantity, TorusGrid};
use crate::eas::CFL_LIMIT;
use crate::error::{invalid, Error, Result};
use crate::kernels::{convolve_periodic, KernelSpec};
use crate::metrics::{
    boltzmann_entropy, centered_derivative, second_xi_moment, w1_periodic, w1_phase, SignedMeasure1D,
};
use crate::profile::{check_support, xi_transport, LEAK_TOLERANCE};
use crate::schedule::{clip_step, snapshot_times, TimeStep};

/// `omega(eps, t) = eps e^{-t/eps}`.
pub fn omega_of(epsilon: f64, t: f64) -> f64 {
    epsilon * libm::exp(-t / epsilon)
}

/// `omega / eps` without cancellation.
fn relaxation_weight(epsilon: f64, t: f64) -> f64 {
    libm::exp(-t / epsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VlasovState {
    pub g: Profile,
    pub m: Field,
    pub epsilon: f64,
    pub leaked: f64,
}

impl VlasovState {
    pub fn t(&self) -> f64 {
        self.g.t
    }

    pub fn omega(&self) -> f64 {
        omega_of(self.epsilon, self.t())
    }

    pub fn rho(&self) -> Field {
        self.g.marginal()
    }

    /// `u = m + omega J / rho` (taken as `m` in empty cells).
    pub fn u(&self) -> Field {
        velocity(&self.m, &self.g, self.omega())
    }
}

/// `m + scale J / rho` from the moments of `g`.
pub(crate) fn velocity(m: &[f64], g: &Profile, scale: f64) -> Field {
    let rho = g.marginal();
    let j = g.moment(1);
    m.iter()
        .zip(rho.iter().zip(&j))
        .map(|(mi, (r, ji))| if *r > 0.0 { mi + scale * ji / r } else { *mi })
        .collect()
}

/// `R = omega^2 int xi^2 g dxi`.
pub fn kinetic_stress(s: &VlasovState) -> Field {
    let w2 = s.omega() * s.omega();
    s.g.moment(2).iter().map(|v| w2 * v).collect()
}

/// Upwind x-transport with velocity `speed * xi_j + m_face` in column `j`.
pub(crate) fn x_transport_sheared(g: &mut Profile, m: &[f64], speed: f64, dt: f64) {
    let nx = g.grid.x.len();
    let nxi = g.grid.xi.len();
    let lam = dt / g.grid.x.dx();
    let xis = g.grid.xi.centers();
    let faces = crate::eas::face_velocities(m);
    let old = g.data.clone();
    let mut flux = alloc::vec![0.0; nx];
    for (j, xi) in xis.iter().enumerate() {
        for i in 0..nx {
            let a = speed * xi + faces[i];
            let next = if i + 1 == nx { 0 } else { i + 1 };
            flux[i] = if a > 0.0 {
                a * old[i * nxi + j]
            } else {
                a * old[next * nxi + j]
            };
        }
        for i in 0..nx {
            let prev = if i == 0 { nx - 1 } else { i - 1 };
            g.data[i * nxi + j] = old[i * nxi + j] - lam * (flux[i] - flux[prev]);
        }
    }
}

/// Upwind `m d_x m`.
pub(crate) fn upwind_advection(m: &[f64], dx: f64) -> Field {
    let n = m.len();
    (0..n)
        .map(|i| {
            let mi = m[i];
            let grad = if mi > 0.0 {
                (mi - m[(i + n - 1) % n]) / dx
            } else {
                (m[(i + 1) % n] - mi) / dx
            };
            mi * grad
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VlasovRun {
    pub snapshots: Vec<VlasovState>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VlasovSolver {
    pub grid: PhaseGrid,
    pub epsilon: f64,
    kernel: Field,
}

impl VlasovSolver {
    pub fn new(grid: PhaseGrid, phi: KernelSpec, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive"));
        }
        Ok(Self {
            grid,
            epsilon,
            kernel: phi.tabulate(&grid.x),
        })
    }

    fn x(&self) -> &TorusGrid {
        &self.grid.x
    }

    pub fn convolve(&self, f: &[f64]) -> Result<Field> {
        convolve_periodic(self.x(), f, &self.kernel)
    }

    /// `g(0) = g0`, `m(0) = u0`.
    pub fn init(&self, g0: Profile, u0: Field) -> Result<VlasovState> {
        if g0.grid != self.grid {
            return Err(Error::GridMismatch {
                expected: self.grid.size(),
                found: g0.grid.size(),
            });
        }
        self.x().check(&u0)?;
        if g0.data.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("g0", "must be finite and nonnegative"));
        }
        check_support(&g0)?;
        Ok(VlasovState {
            g: g0,
            m: u0,
            epsilon: self.epsilon,
            leaked: 0.0,
        })
    }

    fn speeds(&self, s: &VlasovState) -> Result<(f64, f64, Field, Field)> {
        let rho_phi = self.convolve(&s.rho())?;
        let k: Field = centered_derivative(self.x(), &s.m)
            .iter()
            .zip(&rho_phi)
            .map(|(a, b)| a + b)
            .collect();
        let mmax = s.m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let vx = s.omega() * self.grid.xi.xi_max() + mmax;
        let vxi = self.grid.xi.xi_max() * k.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok((vx, vxi, k, rho_phi))
    }

    pub fn stable_dt(&self, s: &VlasovState) -> Result<f64> {
        let (vx, vxi, _, _) = self.speeds(s)?;
        let a = if vx > 0.0 { self.x().dx() / vx } else { f64::INFINITY };
        let b = if vxi > 0.0 {
            self.grid.xi.dxi() / vxi
        } else {
            f64::INFINITY
        };
        Ok(a.min(b))
    }

    pub fn step(&self, s: &VlasovState, dt: f64) -> Result<VlasovState> {
        if !(dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        let (vx, vxi, k, rho_phi) = self.speeds(s)?;
        for (direction, number) in [("x", vx * dt / self.x().dx()), ("xi", vxi * dt / self.grid.xi.dxi())] {
            if number > CFL_LIMIT {
                return Err(Error::Cfl {
                    direction,
                    number,
                    limit: CFL_LIMIT,
                });
            }
        }
        let omega = s.omega();
        let rho = s.rho();
        let u = s.u();
        let flux: Field = rho.iter().zip(&u).map(|(r, v)| r * v).collect();
        let flux_phi = self.convolve(&flux)?;

        let mut g = s.g.clone();
        x_transport_sheared(&mut g, &s.m, omega, dt);
        let mut scratch = Vec::with_capacity(self.grid.xi.len() + 1);
        let mut lost = 0.0;
        for (i, &ki) in k.iter().enumerate() {
            lost += xi_transport(g.row_mut(i), ki, &self.grid, dt, &mut scratch);
        }
        lost *= self.x().dx();
        let t_new = s.t() + dt;
        g.t = t_new;

        let rho_new = g.marginal();
        if let Some((cell, &value)) = rho_new.iter().enumerate().find(|(_, r)| **r < 0.0) {
            return Err(Error::NegativeMarginal { cell, value });
        }
        let j_new = g.moment(1);
        let relax = relaxation_weight(self.epsilon, t_new);
        let adv = upwind_advection(&s.m, self.x().dx());
        let m: Field = (0..s.m.len())
            .map(|i| {
                let drift = if rho_new[i] > 0.0 {
                    relax * j_new[i] / rho_new[i]
                } else {
                    0.0
                };
                (s.m[i] - dt * adv[i] + dt * flux_phi[i] + dt * drift) / (1.0 + dt * rho_phi[i])
            })
            .collect();

        let leaked = s.leaked + lost;
        let mass = g.mass();
        if leaked > LEAK_TOLERANCE * mass {
            return Err(Error::BoundaryLeak { lost: leaked, mass });
        }
        if g.data.iter().chain(&m).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vlasov step"));
        }
        Ok(VlasovState {
            g,
            m,
            epsilon: self.epsilon,
            leaked,
        })
    }

    pub fn diagnostics(&self, s: &VlasovState) -> Result<DiagnosticsRecord> {
        let rho = s.rho();
        let u = s.u();
        let dx = self.x().dx();
        let mut d = DiagnosticsRecord::new(s.t());
        d.set(Quantity::Mass, s.g.mass())?;
        d.set(
            Quantity::Momentum,
            rho.iter().zip(&u).map(|(r, v)| r * v).sum::<f64>() * dx,
        )?;
        d.set(
            Quantity::Energy,
            0.5 * rho.iter().zip(&u).map(|(r, v)| r * v * v).sum::<f64>() * dx,
        )?;
        d.set(Quantity::BoltzmannEntropy, boltzmann_entropy(&s.g))?;
        d.set(Quantity::SecondXiMoment, second_xi_moment(&s.g))?;
        Ok(d)
    }

    pub fn run(&self, initial: VlasovState, times: &[f64], policy: TimeStep) -> Result<VlasovRun> {
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
                let (dt, hit) = clip_step(s.t(), target, policy.resolve(self.stable_dt(&s)?));
                s = self.step(&s, dt)?;
                if hit {
                    s.g.t = target;
                }
                steps += 1;
            }
            diagnostics.push(self.diagnostics(&s)?);
            snapshots.push(s.clone());
        }
        Ok(VlasovRun {
            snapshots,
            diagnostics,
            steps,
        })
    }

    /// `L1` residual of the momentum balance
    /// `d_t(rho u) + d_x(rho u^2 + R) = rho (u rho)_phi - rho u rho_phi`
    /// between two consecutive states, centred differences in `x`.
    pub fn momentum_residual(&self, prev: &VlasovState, next: &VlasovState) -> Result<f64> {
        let dt = next.t() - prev.t();
        if !(dt > 0.0) {
            return Err(invalid("states", "must be in increasing time order"));
        }
        let x = self.x();
        let (rho0, u0) = (prev.rho(), prev.u());
        let (rho1, u1) = (next.rho(), next.u());
        let r = kinetic_stress(prev);
        let flux: Field = (0..rho0.len()).map(|i| rho0[i] * u0[i] * u0[i] + r[i]).collect();
        let div = centered_derivative(x, &flux);
        let mom: Field = rho0.iter().zip(&u0).map(|(a, b)| a * b).collect();
        let mom_phi = self.convolve(&mom)?;
        let rho_phi = self.convolve(&rho0)?;
        let total: f64 = (0..rho0.len())
            .map(|i| {
                let dmom = (rho1[i] * u1[i] - rho0[i] * u0[i]) / dt;
                let force = rho0[i] * (mom_phi[i] - u0[i] * rho_phi[i]);
                (dmom + div[i] - force).abs()
            })
            .sum();
        Ok(total * x.dx())
    }
}

/// Slices used for the phase-space distance to the limit profile.
pub const PROFILE_SLICES: usize = 16;

/// `W1` distances of a Vlasov state from the limit `(rho, u, g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlasovDistances {
    pub w1_rho: f64,
    pub w1_mom_u: f64,
    pub w1_mom_m: f64,
    pub w1_g: f64,
}

pub fn vlasov_distances(s: &VlasovState, rho: &[f64], u: &[f64], g: &Profile) -> Result<VlasovDistances> {
    let x = &s.g.grid.x;
    let rho_e = s.rho();
    let measure = |f: &[f64]| SignedMeasure1D::from_density(x, f);
    let target: Field = rho.iter().zip(u).map(|(a, b)| a * b).collect();
    let target_m = measure(&target)?;
    let mass = quadrature_x(x, &target);
    let mom = |v: &[f64]| -> Result<f64> {
        let f: Field = rho_e.iter().zip(v).map(|(a, b)| a * b).collect();
        w1_periodic(&measure(&f)?.balanced_against(x, mass), &target_m)
    };
    Ok(VlasovDistances {
        w1_rho: w1_periodic(&measure(&rho_e)?, &measure(rho)?)?,
        w1_mom_u: mom(&s.u())?,
        w1_mom_m: mom(&s.m)?,
        w1_g: w1_phase(&s.g, g, PROFILE_SLICES)?,
    })
}
