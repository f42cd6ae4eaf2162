//! Modulated Fokker-Planck-alignment system
//! `d_t g + d_x((sqrt(sigma) xi + m) g) = d_xi((xi d_x m + xi rho_phi) g)
//!   + (1/eps)(d_xi^2 g + d_xi(xi g))`
//! with `m` relaxing to the Favre-filtered `u = m + sqrt(sigma) J / rho`.
//!
//! The Ornstein-Uhlenbeck part is solved by backward Euler with
//! exponentially fitted (Scharfetter-Gummel) fluxes
//! `F = (B(-z) g_{j+1} - B(z) g_j) / dxi`, `z = xi_face dxi`,
//! `B(z) = z / (e^z - 1)`, whose null space is exactly the sampled Gaussian.
//! The `m` update treats the relaxation implicitly and is solved by
//! conjugate gradients in the `rho`-weighted inner product, in which the
//! Favre filter is self-adjoint.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::domain::{quadrature_x, DiagnosticsRecord, Field, ModulationParams, PhaseGrid, Profile, Quantity};
use crate::eas::CFL_LIMIT;
use crate::error::{invalid, Error, Result};
use crate::kernels::{convolve_periodic, KernelSpec, Mollifier};
use crate::metrics::{
    boltzmann_entropy, centered_derivative, fisher_information, modulated_energy, relative_entropy_maxwellian,
    second_xi_moment, w1_periodic, w2_periodic, SignedMeasure1D,
};
use crate::profile::xi_transport;
use crate::schedule::{clip_step, snapshot_times, TimeStep};
use crate::vlasov::{upwind_advection, velocity, x_transport_sheared};

/// Smallest admissible half-width of the xi box, in standard deviations.
pub const MIN_XI_BOX: f64 = 6.0;

/// `sigma` in `(0, 1/e)` with `sigma log(1/sigma) = eps`.
pub fn sigma_for_epsilon(epsilon: f64) -> Result<f64> {
    let peak = 1.0 / core::f64::consts::E;
    if !(epsilon > 0.0 && epsilon < peak) {
        return Err(invalid("epsilon", "sigma log(1/sigma) = eps needs 0 < eps < 1/e"));
    }
    let f = |s: f64| -s * libm::log(s) - epsilon;
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, peak);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `B(z) = z / (e^z - 1)`.
#[inline]
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - 0.5 * z
    } else {
        z / libm::expm1(z)
    }
}

/// Standard Gaussian sampled at the xi centres.
pub fn gaussian_column(grid: &PhaseGrid) -> Field {
    grid.xi
        .centers()
        .iter()
        .map(|xi| libm::exp(-0.5 * xi * xi) / libm::sqrt(2.0 * PI))
        .collect()
}

/// Factorised backward-Euler OU operator for one step size.
///
/// Solved in the quotient `h = g / G` (`G` the sampled Gaussian), where the
/// fitted flux `B(-z) g_R - B(z) g_L = k (h_R - h_L)` with `k = B(z) G_L`
/// gives a symmetric M-matrix whose kernel is the constants.
#[derive(Debug, Clone, PartialEq)]
pub struct OuSolver {
    gauss: Field,
    /// Face couplings `lam k_f`, face `f` between cells `f - 1` and `f`.
    coupling: Field,
    lower: Field,
    cp: Field,
    denom: Field,
}

impl OuSolver {
    pub fn new(grid: &PhaseGrid, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("dt_over_eps", "must be positive"));
        }
        let n = grid.xi.len();
        let dxi = grid.xi.dxi();
        let lam = tau / (dxi * dxi);
        let gauss = gaussian_column(grid);
        let (mut a, mut b, mut c) = (vec![0.0; n], gauss.clone(), vec![0.0; n]);
        let mut coupling = vec![0.0; n];
        for f in 1..n {
            let k = lam * bernoulli(grid.xi.face(f) * dxi) * gauss[f - 1];
            coupling[f] = k;
            b[f - 1] += k;
            c[f - 1] -= k;
            b[f] += k;
            a[f] -= k;
        }
        let mut cp = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = b[0];
        cp[0] = c[0] / denom[0];
        for i in 1..n {
            denom[i] = b[i] - a[i] * cp[i - 1];
            if !(denom[i] > 0.0) {
                return Err(Error::LinearSolve("OU operator lost diagonal dominance"));
            }
            cp[i] = c[i] / denom[i];
        }
        Ok(Self {
            gauss,
            coupling,
            lower: a,
            cp,
            denom,
        })
    }

    fn sweep(&self, row: &mut [f64]) {
        let n = row.len();
        row[0] /= self.denom[0];
        for i in 1..n {
            row[i] = (row[i] - self.lower[i] * row[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            row[i] -= self.cp[i] * row[i + 1];
        }
    }

    /// `g - (G h + lam div(k grad h))`, evaluated through differences of `h`.
    fn residual(&self, g: &[f64], h: &[f64], out: &mut [f64]) {
        for j in 0..g.len() {
            out[j] = g[j] - self.gauss[j] * h[j];
        }
        for f in 1..g.len() {
            let flux = self.coupling[f] * (h[f - 1] - h[f]);
            out[f - 1] -= flux;
            out[f] += flux;
        }
    }

    pub fn solve_in_place(&self, row: &mut [f64]) {
        let g = row.to_vec();
        self.sweep(row);
        let mut r = vec![0.0; g.len()];
        for _ in 0..2 {
            self.residual(&g, row, &mut r);
            self.sweep(&mut r);
            for (h, d) in row.iter_mut().zip(&r) {
                *h += d;
            }
        }
        for (v, gs) in row.iter_mut().zip(&self.gauss) {
            *v *= gs;
        }
    }
}

/// One backward-Euler step of `d_tau g = d_xi(d_xi g + xi g)` per x-cell.
pub fn ou_implicit_substep(g: &Profile, dt_over_eps: f64) -> Result<Profile> {
    let op = OuSolver::new(&g.grid, dt_over_eps)?;
    let mut out = g.clone();
    for i in 0..g.grid.x.len() {
        op.solve_in_place(out.row_mut(i));
    }
    if out.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolve("non-finite OU solution"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub g: Profile,
    pub m: Field,
    pub params: ModulationParams,
    pub leaked: f64,
}

impl FpState {
    pub fn t(&self) -> f64 {
        self.g.t
    }

    pub fn rho(&self) -> Field {
        self.g.marginal()
    }

    /// `u = m + sqrt(sigma) J / rho`.
    pub fn u(&self) -> Field {
        velocity(&self.m, &self.g, libm::sqrt(self.params.sigma))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpRun {
    pub snapshots: Vec<FpState>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSolver {
    pub grid: PhaseGrid,
    pub params: ModulationParams,
    kernel: Field,
    psi: Mollifier,
}

/// Conjugate-gradient tolerance on the weighted residual.
const CG_TOL: f64 = 1e-13;
const CG_MAX_ITERS: usize = 500;

impl FpSolver {
    pub fn new(grid: PhaseGrid, phi: KernelSpec, params: ModulationParams) -> Result<Self> {
        params.validate_fp()?;
        if grid.xi.xi_max() < MIN_XI_BOX {
            return Err(Error::XiBoxTooSmall {
                xi_max: grid.xi.xi_max(),
                required: MIN_XI_BOX,
            });
        }
        let psi = Mollifier::build(params.delta, params.alpha, &grid.x)?;
        Ok(Self {
            grid,
            params,
            kernel: phi.tabulate(&grid.x),
            psi,
        })
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.psi
    }

    fn convolve(&self, f: &[f64]) -> Result<Field> {
        convolve_periodic(&self.grid.x, f, &self.kernel)
    }

    /// `g0 = rho0 x N(0, 1)`, `m0 = u0`.
    pub fn init(&self, rho0: &[f64], u0: Field) -> Result<FpState> {
        self.grid.x.check(&u0)?;
        if rho0.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(invalid("rho0", "must be finite and nonnegative"));
        }
        let col = gaussian_column(&self.grid);
        let mut g = Profile::zeros(self.grid);
        for (i, r) in rho0.iter().enumerate() {
            for (v, c) in g.row_mut(i).iter_mut().zip(&col) {
                *v = r * c;
            }
        }
        Ok(FpState {
            g,
            m: u0,
            params: self.params,
            leaked: 0.0,
        })
    }

    fn speeds(&self, s: &FpState) -> Result<(f64, f64, Field, Field)> {
        let rho_phi = self.convolve(&s.rho())?;
        let k: Field = centered_derivative(&self.grid.x, &s.m)
            .iter()
            .zip(&rho_phi)
            .map(|(a, b)| a + b)
            .collect();
        let mmax = s.m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let vx = libm::sqrt(self.params.sigma) * self.grid.xi.xi_max() + mmax;
        let vxi = self.grid.xi.xi_max() * k.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok((vx, vxi, k, rho_phi))
    }

    /// Courant-one step of the non-stiff transport.
    pub fn stable_dt(&self, s: &FpState) -> Result<f64> {
        let (vx, vxi, _, _) = self.speeds(s)?;
        let a = if vx > 0.0 { self.grid.x.dx() / vx } else { f64::INFINITY };
        let b = if vxi > 0.0 {
            self.grid.xi.dxi() / vxi
        } else {
            f64::INFINITY
        };
        Ok(a.min(b))
    }

    /// Favre filter `v -> psi * ((psi * (v rho)) / (psi * rho))` for fixed `rho`.
    fn favre_operator<'a>(&'a self, rho: &'a [f64]) -> Result<impl Fn(&[f64]) -> Result<Field> + 'a> {
        let den = self.psi.convolve(&self.grid.x, rho)?;
        if den.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::ZeroMass);
        }
        Ok(move |v: &[f64]| {
            let w: Field = v.iter().zip(rho).map(|(a, b)| a * b).collect();
            let num = self.psi.convolve(&self.grid.x, &w)?;
            let ratio: Field = num.iter().zip(&den).map(|(a, b)| a / b).collect();
            self.psi.convolve(&self.grid.x, &ratio)
        })
    }

    /// Solve `(diag - c F) m = rhs` with `F` the Favre filter at `rho`.
    fn solve_relaxation(&self, diag: &[f64], c: f64, rho: &[f64], rhs: &[f64], guess: &[f64]) -> Result<Field> {
        let filter = self.favre_operator(rho)?;
        let apply = |v: &[f64]| -> Result<Field> {
            let fv = filter(v)?;
            Ok(v.iter().zip(diag).zip(&fv).map(|((x, d), f)| d * x - c * f).collect())
        };
        let rmax = rho.iter().fold(0.0f64, |a, r| a.max(*r));
        let w: Field = rho.iter().map(|r| r.max(1e-12 * rmax)).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&w).map(|((x, y), z)| x * y * z).sum::<f64>();

        let mut x = guess.to_vec();
        let ax = apply(&x)?;
        let mut r: Field = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let scale = dot(rhs, rhs).max(f64::MIN_POSITIVE);
        for _ in 0..CG_MAX_ITERS {
            if rr <= CG_TOL * CG_TOL * scale {
                return Ok(x);
            }
            let ap = apply(&p)?;
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rr / pap;
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..p.len() {
                p[i] = r[i] + beta * p[i];
            }
        }
        // fixed point m <- (rhs + c F m) / diag, a contraction since |F| <= 1
        let mut m = guess.to_vec();
        for _ in 0..100_000 {
            let fm = filter(&m)?;
            let next: Field = (0..m.len()).map(|i| (rhs[i] + c * fm[i]) / diag[i]).collect();
            let delta = next.iter().zip(&m).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            m = next;
            if delta <= 1e-14 * (1.0 + m.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
                return Ok(m);
            }
        }
        Err(Error::LinearSolve("relaxation solve did not converge"))
    }

    pub fn step(&self, s: &FpState, dt: f64) -> Result<FpState> {
        if !(dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        let (vx, vxi, k, rho_phi) = self.speeds(s)?;
        for (direction, number) in [("x", vx * dt / self.grid.x.dx()), ("xi", vxi * dt / self.grid.xi.dxi())] {
            if number > CFL_LIMIT {
                return Err(Error::Cfl {
                    direction,
                    number,
                    limit: CFL_LIMIT,
                });
            }
        }
        let eps = self.params.epsilon;
        let sqrt_sigma = libm::sqrt(self.params.sigma);
        let rho = s.rho();
        let u = s.u();
        let flux: Field = rho.iter().zip(&u).map(|(r, v)| r * v).collect();
        let flux_phi = self.convolve(&flux)?;

        let mut g = s.g.clone();
        x_transport_sheared(&mut g, &s.m, sqrt_sigma, dt);
        let mut scratch = Vec::with_capacity(self.grid.xi.len() + 1);
        let mut lost = 0.0;
        for (i, &ki) in k.iter().enumerate() {
            lost += xi_transport(g.row_mut(i), ki, &self.grid, dt, &mut scratch);
        }
        lost *= self.grid.x.dx();
        let ou = OuSolver::new(&self.grid, dt / eps)?;
        for i in 0..self.grid.x.len() {
            ou.solve_in_place(g.row_mut(i));
        }
        g.t = s.t() + dt;

        let rho_new = g.marginal();
        if let Some((cell, &value)) = rho_new.iter().enumerate().find(|(_, r)| **r < 0.0) {
            return Err(Error::NegativeMarginal { cell, value });
        }
        let j_new = g.moment(1);
        let w: Field = rho_new
            .iter()
            .zip(&j_new)
            .map(|(r, j)| if *r > 0.0 { sqrt_sigma * j / r } else { 0.0 })
            .collect();
        let c = dt / eps;
        let filtered_w = self.favre_operator(&rho_new)?(&w)?;
        let adv = upwind_advection(&s.m, self.grid.x.dx());
        let rhs: Field = (0..s.m.len())
            .map(|i| s.m[i] - dt * adv[i] + dt * flux_phi[i] + c * filtered_w[i])
            .collect();
        let diag: Field = rho_phi.iter().map(|r| 1.0 + dt * r + c).collect();
        let m = self.solve_relaxation(&diag, c, &rho_new, &rhs, &s.m)?;

        let leaked = s.leaked + lost;
        let mass = g.mass();
        if leaked > crate::profile::LEAK_TOLERANCE * mass {
            return Err(Error::BoundaryLeak { lost: leaked, mass });
        }
        if g.data.iter().chain(&m).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fokker-planck step"));
        }
        Ok(FpState {
            g,
            m,
            params: self.params,
            leaked,
        })
    }

    pub fn diagnostics(&self, s: &FpState) -> Result<DiagnosticsRecord> {
        let rho = s.rho();
        let u = s.u();
        let dx = self.grid.x.dx();
        let mut d = DiagnosticsRecord::new(s.t());
        d.set(Quantity::Mass, s.g.mass())?;
        d.set(
            Quantity::Momentum,
            rho.iter().zip(&u).map(|(r, v)| r * v).sum::<f64>() * dx,
        )?;
        d.set(Quantity::BoltzmannEntropy, boltzmann_entropy(&s.g))?;
        d.set(Quantity::RelativeEntropy, relative_entropy_maxwellian(&s.g, &rho)?)?;
        d.set(Quantity::FisherInformation, fisher_information(&s.g))?;
        d.set(Quantity::SecondXiMoment, second_xi_moment(&s.g))?;
        Ok(d)
    }

    pub fn run(&self, initial: FpState, times: &[f64], policy: TimeStep) -> Result<FpRun> {
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
        Ok(FpRun {
            snapshots,
            diagnostics,
            steps,
        })
    }
}

/// Distances of an FP state from the limit `(rho, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpFunctionals {
    pub mod_energy: f64,
    pub w2sq_rho: f64,
    pub w1sq_mom: f64,
    pub w1sq_mom_m: f64,
    pub rel_entropy: f64,
    pub fisher: f64,
}

pub fn fp_functionals(s: &FpState, rho: &[f64], u: &[f64]) -> Result<FpFunctionals> {
    let x = &s.g.grid.x;
    let rho_e = s.rho();
    let u_e = s.u();
    let measure = |f: &[f64]| SignedMeasure1D::from_density(x, f);
    let target: Field = rho.iter().zip(u).map(|(a, b)| a * b).collect();
    let target_m = measure(&target)?;
    let mass = quadrature_x(x, &target);
    let mom = |v: &[f64]| -> Result<f64> {
        let f: Field = rho_e.iter().zip(v).map(|(a, b)| a * b).collect();
        w1_periodic(&measure(&f)?.balanced_against(x, mass), &target_m)
    };
    let w2 = w2_periodic(&measure(&rho_e)?, &measure(rho)?)?;
    let w1u = mom(&u_e)?;
    let w1m = mom(&s.m)?;
    Ok(FpFunctionals {
        mod_energy: modulated_energy(&s.g, libm::sqrt(s.params.sigma), &s.m, u)?,
        w2sq_rho: w2 * w2,
        w1sq_mom: w1u * w1u,
        w1sq_mom_m: w1m * w1m,
        rel_entropy: relative_entropy_maxwellian(&s.g, rho)?,
        fisher: fisher_information(&s.g),
    })
}
