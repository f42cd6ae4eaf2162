//! Limiting profile equation
//! `d_t g + d_x(u g) = d_xi((xi d_x u + xi rho_phi) g)`, advanced together
//! with the Euler-alignment solver that supplies `u` and `rho_phi`.
//!
//! Each step is split: x-transport with the same face velocities as the
//! density update, then xi-transport with velocity `-xi e`, `e = d_x u +
//! rho_phi`, where `d_x u` is the centred difference (the divergence of the
//! face velocities). Both substeps are conservative upwind, so positivity
//! holds under CFL and the x-marginal of `g` follows the discrete density
//! exactly; the xi-flux is odd under `xi -> -xi`, which preserves parity.

use alloc::vec::Vec;

use crate::domain::{quadrature_x, DiagnosticsRecord, Field, PhaseGrid, Profile, Quantity};
use crate::eas::{face_velocities, EasSolver, EasState, CFL_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::metrics::{boltzmann_entropy, second_xi_moment};
use crate::schedule::{clip_step, snapshot_times, TimeStep};

/// Largest tolerated cumulative loss through the xi boundary, relative to mass.
pub const LEAK_TOLERANCE: f64 = 1e-8;

/// `rho(x)` times the centred Gaussian of the given variance in `xi`.
pub fn gaussian_profile(grid: PhaseGrid, rho: &[f64], variance: f64) -> Result<Profile> {
    if !(variance > 0.0) {
        return Err(invalid("variance", "must be positive"));
    }
    let norm = libm::sqrt(2.0 * core::f64::consts::PI * variance);
    Profile::separable(grid, rho, |xi| libm::exp(-0.5 * xi * xi / variance) / norm)
}

/// Fail when the outermost xi cells carry more than `LEAK_TOLERANCE` of the mass.
pub fn check_support(g: &Profile) -> Result<()> {
    let n = g.grid.xi.len();
    let edge: f64 = (0..g.grid.x.len()).map(|i| g.get(i, 0) + g.get(i, n - 1)).sum::<f64>() * g.grid.cell_measure();
    let mass = g.mass();
    if edge > LEAK_TOLERANCE * mass.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::SupportViolation { edge_mass: edge });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileState {
    pub g: Profile,
    pub eas: EasState,
    /// Cumulative mass lost through the xi boundary.
    pub leaked: f64,
}

impl ProfileState {
    pub fn t(&self) -> f64 {
        self.g.t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRun {
    pub snapshots: Vec<ProfileState>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSolver {
    pub eas: EasSolver,
    pub grid: PhaseGrid,
}

/// Conservative upwind transport in `xi` with velocity `-xi_face * k` and
/// outflow-only boundaries. Returns the mass (per unit `dx`) that left.
pub(crate) fn xi_transport(row: &mut [f64], k: f64, grid: &PhaseGrid, dt: f64, scratch: &mut Vec<f64>) -> f64 {
    let n = row.len();
    let lam = dt / grid.xi.dxi();
    scratch.clear();
    // faces 0..=n
    for f in 0..=n {
        let b = -grid.xi.face(f) * k;
        let flux = if f == 0 {
            if b < 0.0 {
                b * row[0]
            } else {
                0.0
            }
        } else if f == n {
            if b > 0.0 {
                b * row[n - 1]
            } else {
                0.0
            }
        } else if b > 0.0 {
            b * row[f - 1]
        } else {
            b * row[f]
        };
        scratch.push(flux);
    }
    for j in 0..n {
        row[j] -= lam * (scratch[j + 1] - scratch[j]);
    }
    dt * (scratch[n] - scratch[0])
}

/// Upwind x-transport of every xi-column of `g` by the face velocities.
pub(crate) fn x_transport(g: &mut Profile, faces: &[f64], dt: f64) {
    let nx = g.grid.x.len();
    let nxi = g.grid.xi.len();
    let lam = dt / g.grid.x.dx();
    let old = g.data.clone();
    let flux = |i: usize, j: usize| {
        let a = faces[i];
        if a > 0.0 {
            a * old[i * nxi + j]
        } else {
            let next = if i + 1 == nx { 0 } else { i + 1 };
            a * old[next * nxi + j]
        }
    };
    for i in 0..nx {
        let prev = if i == 0 { nx - 1 } else { i - 1 };
        for j in 0..nxi {
            g.data[i * nxi + j] = old[i * nxi + j] - lam * (flux(i, j) - flux(prev, j));
        }
    }
}

impl ProfileSolver {
    pub fn new(eas: EasSolver, grid: PhaseGrid) -> Result<Self> {
        if grid.x != *eas.grid() {
            return Err(Error::GridMismatch {
                expected: eas.grid().len(),
                found: grid.x.len(),
            });
        }
        Ok(Self { eas, grid })
    }

    pub fn state(&self, g: Profile, eas: EasState) -> Result<ProfileState> {
        if g.grid != self.grid {
            return Err(Error::GridMismatch {
                expected: self.grid.size(),
                found: g.grid.size(),
            });
        }
        if g.data.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("g0", "must be finite and nonnegative"));
        }
        check_support(&g)?;
        let mut g = g;
        g.t = eas.t();
        Ok(ProfileState { g, eas, leaked: 0.0 })
    }

    /// Courant-one step from the x and xi speeds.
    pub fn stable_dt(&self, ps: &ProfileState) -> f64 {
        let kmax = ps.eas.e().iter().fold(0.0f64, |m, k| m.max(k.abs()));
        let xi_dt = if kmax > 0.0 {
            self.grid.xi.dxi() / (self.grid.xi.xi_max() * kmax)
        } else {
            f64::INFINITY
        };
        self.eas.stable_dt(&ps.eas).min(xi_dt)
    }

    pub fn step(&self, ps: &ProfileState, dt: f64) -> Result<ProfileState> {
        let e = ps.eas.e();
        let kmax = e.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        let number = dt * self.grid.xi.xi_max() * kmax / self.grid.xi.dxi();
        if number > CFL_LIMIT {
            return Err(Error::Cfl {
                direction: "xi",
                number,
                limit: CFL_LIMIT,
            });
        }
        let eas = self.eas.step(&ps.eas, dt)?;

        let mut g = ps.g.clone();
        x_transport(&mut g, &face_velocities(&ps.eas.state.u), dt);
        let mut scratch = Vec::with_capacity(self.grid.xi.len() + 1);
        let mut lost = 0.0;
        for (i, &k) in e.iter().enumerate() {
            lost += xi_transport(g.row_mut(i), k, &self.grid, dt, &mut scratch);
        }
        lost *= self.grid.x.dx();
        g.t = eas.t();

        let leaked = ps.leaked + lost;
        let mass = g.mass();
        if leaked > LEAK_TOLERANCE * mass {
            return Err(Error::BoundaryLeak { lost: leaked, mass });
        }
        if g.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("profile step"));
        }
        Ok(ProfileState { g, eas, leaked })
    }

    pub fn diagnostics(&self, ps: &ProfileState) -> Result<DiagnosticsRecord> {
        let mut d = self.eas.diagnostics(&ps.eas)?;
        d.set(Quantity::Mass, ps.g.mass())?;
        d.set(Quantity::BoltzmannEntropy, boltzmann_entropy(&ps.g))?;
        d.set(Quantity::SecondXiMoment, second_xi_moment(&ps.g))?;
        d.set(Quantity::W1Rho, marginal_consistency(ps))?;
        Ok(d)
    }

    pub fn run(&self, initial: ProfileState, times: &[f64], policy: TimeStep) -> Result<ProfileRun> {
        policy.validate()?;
        let times = snapshot_times(times)?;
        let mut ps = initial;
        let mut snapshots = Vec::with_capacity(times.len());
        let mut diagnostics = Vec::with_capacity(times.len());
        let mut steps = 0;
        for &target in &times {
            if target < ps.t() - 1e-12 {
                return Err(Error::TimeRange {
                    t: target,
                    start: ps.t(),
                    end: f64::INFINITY,
                });
            }
            while ps.t() < target - 1e-12 {
                let (dt, hit) = clip_step(ps.t(), target, policy.resolve(self.stable_dt(&ps)));
                ps = self.step(&ps, dt)?;
                if hit {
                    ps.g.t = target;
                    ps.eas.state.t = target;
                }
                steps += 1;
            }
            diagnostics.push(self.diagnostics(&ps)?);
            snapshots.push(ps.clone());
        }
        Ok(ProfileRun {
            snapshots,
            diagnostics,
            steps,
        })
    }
}

/// `int |int g dxi - rho| dx` against the companion density.
pub fn marginal_consistency(ps: &ProfileState) -> f64 {
    let m = ps.g.marginal();
    let d: Field = m.iter().zip(&ps.eas.state.rho).map(|(a, b)| (a - b).abs()).collect();
    quadrature_x(&ps.g.grid.x, &d)
}

/// `rho m = int xi g dxi` per cell.
pub fn profile_momentum(ps: &ProfileState) -> Field {
    ps.g.moment(1)
}

/// Largest `|g(x, xi) - g(x, -xi)|`.
pub fn parity_defect(g: &Profile) -> f64 {
    let n = g.grid.xi.len();
    (0..g.grid.x.len())
        .flat_map(|i| (0..n / 2).map(move |j| (i, j)))
        .map(|(i, j)| (g.get(i, j) - g.get(i, n - 1 - j)).abs())
        .fold(0.0, f64::max)
}
