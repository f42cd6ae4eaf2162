//! Particle oracles: deterministic Cucker-Smale swarms and Langevin particles
//! following the stochastic characteristics of the Fokker-Planck model.
//!
//! Randomness is counter-based: particle `i` at step `n` reads ChaCha8 stream
//! `i` from word position `n << 20`, so results do not depend on evaluation
//! order or thread count.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Standard, StandardNormal};

use crate::domain::{quadrature_x, rem_euclid, Field, TorusGrid};
use crate::error::{invalid, Error, Result};
use crate::kernels::{KernelKind, KernelSpec, Mollifier};
use crate::metrics::{w1_periodic, SignedMeasure1D, MASS_TOLERANCE};

/// Words reserved per particle and step.
const STEP_STRIDE: u32 = 20;

/// Deterministic generator for `(seed, particle, step)`.
pub fn particle_rng(seed: u64, particle: usize, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle as u64);
    rng.set_word_pos((step as u128) << STEP_STRIDE);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Swarm {
    /// Torus the particles live on; also fixes kernel normalisation.
    pub torus: TorusGrid,
    pub mass: Field,
    pub x: Field,
    pub v: Field,
    pub t: f64,
}

impl Swarm {
    pub fn new(torus: TorusGrid, mass: Field, x: Field, v: Field) -> Result<Self> {
        if mass.len() != x.len() || x.len() != v.len() {
            return Err(invalid("swarm", "mass, position and velocity lengths differ"));
        }
        if mass.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(invalid("mass", "particle masses must be positive"));
        }
        if x.iter().chain(&v).any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("swarm"));
        }
        let x = x.iter().map(|p| rem_euclid(*p, torus.length())).collect();
        Ok(Self {
            torus,
            mass,
            x,
            v,
            t: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn momentum(&self) -> f64 {
        self.mass.iter().zip(&self.v).map(|(m, v)| m * v).sum()
    }

    pub fn velocity_diameter(&self) -> f64 {
        let (lo, hi) = self
            .v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if self.v.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

/// `n` equal-mass particles drawn from the density `rho`, each with velocity
/// `u` interpolated at its position.
pub fn sample_swarm(grid: &TorusGrid, rho: &[f64], u: &[f64], n: usize, seed: u64) -> Result<Swarm> {
    grid.check(rho)?;
    grid.check(u)?;
    if n == 0 {
        return Err(invalid("n", "need at least one particle"));
    }
    if rho.iter().any(|r| !(*r >= 0.0)) {
        return Err(invalid("rho", "must be nonnegative"));
    }
    let total = quadrature_x(grid, rho);
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let dx = grid.dx();
    let mut cdf = Vec::with_capacity(grid.len() + 1);
    cdf.push(0.0);
    for r in rho {
        let last = *cdf.last().unwrap_or(&0.0);
        cdf.push(last + r * dx / total);
    }
    let mut x = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let q: f64 = Standard.sample(&mut particle_rng(seed, i, 0));
        let cell = cdf.partition_point(|c| *c <= q).clamp(1, grid.len()) - 1;
        let frac = if rho[cell] > 0.0 {
            (q - cdf[cell]) / (cdf[cell + 1] - cdf[cell])
        } else {
            0.5
        };
        let pos = (cell as f64 + frac.clamp(0.0, 1.0)) * dx;
        x.push(pos);
        v.push(grid.interpolate(u, pos));
    }
    Swarm::new(*grid, vec![total / n as f64; n], x, v)
}

/// `sum_j m_j phi(x_i - x_j)` and `sum_j m_j phi(x_i - x_j) v_j` at every particle.
fn kernel_sums(torus: &TorusGrid, phi: &KernelSpec, mass: &[f64], x: &[f64], v: &[f64]) -> (Field, Field) {
    let n = x.len();
    let scale = phi.value(torus, 0.0);
    if matches!(phi.kind, KernelKind::Constant) {
        let m: f64 = mass.iter().sum::<f64>() * scale;
        let p: f64 = mass.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * scale;
        return (vec![m; n], vec![p; n]);
    }
    let mut rho = vec![0.0; n];
    let mut flux = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let w = mass[j] * scale * phi.value_at_distance(torus.periodic_distance(x[i], x[j]));
            rho[i] += w;
            flux[i] += w * v[j];
        }
    }
    (rho, flux)
}

/// Alignment acceleration `sum_j m_j phi(x_i - x_j)(v_j - v_i)`.
pub fn cs_acceleration(torus: &TorusGrid, phi: &KernelSpec, mass: &[f64], x: &[f64], v: &[f64]) -> Field {
    let (rho, flux) = kernel_sums(torus, phi, mass, x, v);
    (0..x.len()).map(|i| flux[i] - rho[i] * v[i]).collect()
}

/// One classical RK4 step of the Cucker-Smale system.
pub fn step_cs(swarm: &Swarm, phi: &KernelSpec, dt: f64) -> Swarm {
    let n = swarm.len();
    let f = |x: &[f64], v: &[f64]| cs_acceleration(&swarm.torus, phi, &swarm.mass, x, v);
    let shift = |base: &[f64], d: &[f64], h: f64| -> Field { (0..n).map(|i| base[i] + h * d[i]).collect() };

    let (x0, v0) = (&swarm.x, &swarm.v);
    let a1 = f(x0, v0);
    let (x2, v2) = (shift(x0, v0, 0.5 * dt), shift(v0, &a1, 0.5 * dt));
    let a2 = f(&x2, &v2);
    let (x3, v3) = (shift(x0, &v2, 0.5 * dt), shift(v0, &a2, 0.5 * dt));
    let a3 = f(&x3, &v3);
    let (x4, v4) = (shift(x0, &v3, dt), shift(v0, &a3, dt));
    let a4 = f(&x4, &v4);

    let l = swarm.torus.length();
    let mut next = swarm.clone();
    for i in 0..n {
        next.x[i] = rem_euclid(x0[i] + dt / 6.0 * (v0[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]), l);
        next.v[i] = v0[i] + dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
    }
    next.t = swarm.t + dt;
    next
}

/// Source of the mean-field terms `(u rho)_phi`, `rho_phi` and `u_delta`.
#[derive(Debug, Clone, Copy)]
pub enum MeanField<'a> {
    /// Cell-centred fields from a grid solver, interpolated at the particles.
    Grid {
        grid: &'a TorusGrid,
        urho_phi: &'a [f64],
        rho_phi: &'a [f64],
        u_delta: &'a [f64],
    },
    /// Computed from the swarm itself. The inner Favre convolutions are exact
    /// sums over atoms at the cell centres of `grid`; the outer one is a grid
    /// convolution interpolated back to the particles.
    Empirical {
        phi: KernelSpec,
        psi: &'a Mollifier,
        grid: &'a TorusGrid,
    },
}

impl MeanField<'_> {
    /// `((u rho)_phi, rho_phi, u_delta)` at every particle.
    pub fn evaluate(&self, swarm: &Swarm) -> Result<(Field, Field, Field)> {
        match *self {
            MeanField::Grid {
                grid,
                urho_phi,
                rho_phi,
                u_delta,
            } => {
                for f in [urho_phi, rho_phi, u_delta] {
                    grid.check(f)?;
                }
                let at = |f: &[f64]| swarm.x.iter().map(|x| grid.interpolate(f, *x)).collect::<Field>();
                Ok((at(urho_phi), at(rho_phi), at(u_delta)))
            }
            MeanField::Empirical { phi, psi, grid } => {
                let (rho_phi, urho_phi) = kernel_sums(&swarm.torus, &phi, &swarm.mass, &swarm.x, &swarm.v);
                let mut ratio = vec![0.0; grid.len()];
                for (k, r) in ratio.iter_mut().enumerate() {
                    let y = grid.center(k);
                    let (mut num, mut den) = (0.0, 0.0);
                    for j in 0..swarm.len() {
                        let w = swarm.mass[j] * psi.value_at(y - swarm.x[j]);
                        num += w * swarm.v[j];
                        den += w;
                    }
                    if !(den > 0.0) {
                        return Err(Error::ZeroMass);
                    }
                    *r = num / den;
                }
                let u_delta = psi.convolve(grid, &ratio)?;
                let u_at = swarm.x.iter().map(|x| grid.interpolate(&u_delta, *x)).collect();
                Ok((urho_phi, rho_phi, u_at))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinParams {
    /// Relaxation time; `f64::INFINITY` switches relaxation and noise off.
    pub epsilon: f64,
    pub sigma: f64,
    pub seed: u64,
}

/// Euler-Maruyama step of
/// `dX = V dt`, `dV = ((u rho)_phi - rho_phi V + (u_delta - V)/eps) dt + sqrt(2 sigma/eps) dB`.
/// `step` selects the random counter block.
pub fn step_langevin(swarm: &Swarm, field: &MeanField<'_>, p: &LangevinParams, dt: f64, step: u64) -> Result<Swarm> {
    if !(p.epsilon > 0.0) || !(p.sigma >= 0.0) {
        return Err(invalid("langevin", "need eps > 0 and sigma >= 0"));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let (urho_phi, rho_phi, u_delta) = field.evaluate(swarm)?;
    let inv_eps = 1.0 / p.epsilon;
    let noise = libm::sqrt(2.0 * p.sigma * inv_eps * dt);
    let l = swarm.torus.length();
    let mut next = swarm.clone();
    for i in 0..swarm.len() {
        let v = swarm.v[i];
        let drift = urho_phi[i] - rho_phi[i] * v + inv_eps * (u_delta[i] - v);
        let kick = if noise > 0.0 {
            let z: f64 = StandardNormal.sample(&mut particle_rng(p.seed, i, step));
            noise * z
        } else {
            0.0
        };
        next.x[i] = rem_euclid(swarm.x[i] + dt * v, l);
        next.v[i] = v + dt * drift + kick;
    }
    next.t = swarm.t + dt;
    Ok(next)
}

/// `(W1(empirical x-marginal, rho), W1(empirical momentum, rho u))`, grid
/// cells treated as atoms at their centres.
pub fn empirical_vs_grid(swarm: &Swarm, grid: &TorusGrid, rho: &[f64], u: &[f64]) -> Result<(f64, f64)> {
    grid.check(rho)?;
    grid.check(u)?;
    let mass = quadrature_x(grid, rho);
    if (swarm.total_mass() - mass).abs() > MASS_TOLERANCE * mass.max(1.0) {
        return Err(Error::MassMismatch {
            lhs: swarm.total_mass(),
            rhs: mass,
        });
    }
    let period = grid.length();
    let emp = SignedMeasure1D::from_atoms(period, swarm.x.iter().copied().zip(swarm.mass.iter().copied()));
    let w1_x = w1_periodic(&emp, &SignedMeasure1D::from_density(grid, rho)?)?;

    let flux: Field = rho.iter().zip(u).map(|(a, b)| a * b).collect();
    let target = SignedMeasure1D::from_density(grid, &flux)?;
    let mom = SignedMeasure1D::from_atoms(
        period,
        (0..swarm.len()).map(|i| (swarm.x[i], swarm.mass[i] * swarm.v[i])),
    )
    .balanced_against(grid, quadrature_x(grid, &flux));
    let w1_v = w1_periodic(&mom, &target)?;
    Ok((w1_x, w1_v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus() -> TorusGrid {
        TorusGrid::unit(64).unwrap()
    }

    fn scattered(n: usize) -> Swarm {
        let x: Field = (0..n).map(|i| (i as f64 * 0.618_033_988_75) % 1.0).collect();
        let v: Field = (0..n).map(|i| libm::sin(3.0 * i as f64)).collect();
        let m: Field = (0..n).map(|i| (1.0 + 0.5 * libm::cos(i as f64)) / n as f64).collect();
        Swarm::new(torus(), m, x, v).unwrap()
    }

    #[test]
    fn two_body_closed_form() {
        let mut s = Swarm::new(torus(), vec![0.5, 0.5], vec![0.1, 0.6], vec![1.0, -1.0]).unwrap();
        let dt = 1e-3;
        for k in 1..=1000 {
            s = step_cs(&s, &KernelSpec::CONSTANT, dt);
            let t = k as f64 * dt;
            assert!((s.v[0] - libm::exp(-t)).abs() <= 1e-8);
            assert!((s.v[0] - s.v[1] - 2.0 * libm::exp(-t)).abs() <= 1e-8);
        }
    }

    #[test]
    fn momentum_and_diameter() {
        let phi = KernelSpec::algebraic(1.0).unwrap();
        let mut s = scattered(48);
        let p0 = s.momentum();
        let mut diam = s.velocity_diameter();
        for _ in 0..100 {
            s = step_cs(&s, &phi, 0.01);
            let d = s.velocity_diameter();
            assert!(d <= diam + 1e-15);
            diam = d;
        }
        assert!((s.momentum() - p0).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_langevin_is_cs() {
        let phi = KernelSpec::algebraic(1.0).unwrap();
        let s = scattered(32);
        let grid = torus();
        let psi = Mollifier::build(0.5, 1.0, &grid).unwrap();
        let field = MeanField::Empirical {
            phi,
            psi: &psi,
            grid: &grid,
        };
        let p = LangevinParams {
            epsilon: f64::INFINITY,
            sigma: 0.0,
            seed: 1,
        };
        let dt = 1e-5;
        let a = step_langevin(&s, &field, &p, dt, 0).unwrap();
        let b = step_cs(&s, &phi, dt);
        for i in 0..s.len() {
            assert!((a.v[i] - b.v[i]).abs() <= 1e-10);
            assert!(grid.periodic_distance(a.x[i], b.x[i]) <= 1e-10);
        }
    }

    #[test]
    fn seeded_runs_repeat_bitwise() {
        let grid = torus();
        let zeros = vec![0.0; 64];
        let field = MeanField::Grid {
            grid: &grid,
            urho_phi: &zeros,
            rho_phi: &zeros,
            u_delta: &zeros,
        };
        let p = LangevinParams {
            epsilon: 0.5,
            sigma: 0.3,
            seed: 42,
        };
        let run = || {
            let mut s = scattered(16);
            for n in 0..20 {
                s = step_langevin(&s, &field, &p, 0.01, n).unwrap();
            }
            s
        };
        let (a, b) = (run(), run());
        assert!(a.v.iter().zip(&b.v).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(a.x.iter().zip(&b.x).all(|(p, q)| p.to_bits() == q.to_bits()));
        let c = step_langevin(&scattered(16), &field, &LangevinParams { seed: 43, ..p }, 0.01, 0).unwrap();
        assert_ne!(c.v, step_langevin(&scattered(16), &field, &p, 0.01, 0).unwrap().v);
    }

    #[test]
    fn samples_follow_the_density() {
        let grid = TorusGrid::unit(128).unwrap();
        let rho = grid.sample(|x| 1.0 + 0.5 * libm::sin(2.0 * core::f64::consts::PI * x));
        let u = grid.sample(|x| libm::cos(2.0 * core::f64::consts::PI * x));
        let n = 4096;
        let s = sample_swarm(&grid, &rho, &u, n, 7).unwrap();
        let (w1_x, w1_v) = empirical_vs_grid(&s, &grid, &rho, &u).unwrap();
        assert!(w1_x <= 4.0 / libm::sqrt(n as f64), "{w1_x}");
        assert!(w1_v <= 4.0 / libm::sqrt(n as f64), "{w1_v}");
        let bad = Swarm::new(grid, vec![1.0; 3], vec![0.1, 0.2, 0.3], vec![0.0; 3]).unwrap();
        assert!(matches!(
            empirical_vs_grid(&bad, &grid, &rho, &u),
            Err(Error::MassMismatch { .. })
        ));
    }
}
