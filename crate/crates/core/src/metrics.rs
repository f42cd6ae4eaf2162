//! Transport distances, energies and entropy functionals.
//!
//! Distances on the circle use the geodesic ground cost. `W1` is the exact
//! `min_c int |F_mu - F_nu - c|` formula; `W2` minimises the quadratic
//! quantile cost over the shift of the lifted quantile function, which is a
//! convex function of the shift.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use crate::domain::{Field, MacroState, Profile, TorusGrid};
use crate::error::{invalid, Error, Result};
use crate::kernels::{convolve_periodic, KernelSpec};

/// Cells with values below this are skipped in entropy-type integrals.
pub const ENTROPY_FLOOR: f64 = 1e-14;

/// Tolerance on the total-mass mismatch accepted by the distances.
pub const MASS_TOLERANCE: f64 = 1e-8;

/// Weighted atoms on a circle of circumference `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedMeasure1D {
    period: f64,
    /// `(position in [0, period), weight)`, sorted by position.
    atoms: Vec<(f64, f64)>,
}

impl SignedMeasure1D {
    pub fn from_atoms(period: f64, atoms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut atoms: Vec<(f64, f64)> = atoms
            .into_iter()
            .map(|(x, w)| (crate::domain::rem_euclid(x, period).min(next_below(period)), w))
            .collect();
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        Self { period, atoms }
    }

    /// Cell masses `f_i dx` placed at the cell centres.
    pub fn from_density(grid: &TorusGrid, density: &[f64]) -> Result<Self> {
        grid.check(density)?;
        let dx = grid.dx();
        Ok(Self::from_atoms(
            grid.length(),
            density.iter().enumerate().map(|(i, f)| (grid.center(i), f * dx)),
        ))
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Spread a mass discrepancy uniformly over `grid` so the totals match.
    pub fn balanced_against(&self, grid: &TorusGrid, target_mass: f64) -> Self {
        let gap = target_mass - self.mass();
        let share = gap / grid.len() as f64;
        let mut atoms = self.atoms.clone();
        atoms.extend((0..grid.len()).map(|i| (grid.center(i), share)));
        Self::from_atoms(self.period, atoms)
    }
}

fn next_below(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

fn check_masses(mu: &SignedMeasure1D, nu: &SignedMeasure1D) -> Result<()> {
    let (a, b) = (mu.mass(), nu.mass());
    if (a - b).abs() > MASS_TOLERANCE {
        return Err(Error::MassMismatch { lhs: a, rhs: b });
    }
    if (mu.period - nu.period).abs() > 1e-14 * mu.period {
        return Err(invalid("period", "measures live on different circles"));
    }
    Ok(())
}

/// Weighted median of `(value, weight)` pairs.
fn weighted_median(mut pairs: Vec<(f64, f64)>) -> f64 {
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for &(v, w) in &pairs {
        acc += w;
        if acc >= 0.5 * total {
            return v;
        }
    }
    pairs.last().map_or(0.0, |p| p.0)
}

/// Exact `W1` on the circle, also valid for balanced signed measures.
pub fn w1_periodic(mu: &SignedMeasure1D, nu: &SignedMeasure1D) -> Result<f64> {
    check_masses(mu, nu)?;
    let mut events: Vec<(f64, f64)> = mu
        .atoms
        .iter()
        .copied()
        .chain(nu.atoms.iter().map(|&(x, w)| (x, -w)))
        .collect();
    if events.is_empty() {
        return Ok(0.0);
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    // (cumulative difference, length of the arc where it holds)
    let mut arcs = Vec::with_capacity(events.len());
    let mut cum = 0.0;
    for k in 0..events.len() {
        cum += events[k].1;
        let next = if k + 1 < events.len() {
            events[k + 1].0
        } else {
            events[0].0 + mu.period
        };
        let len = next - events[k].0;
        if len > 0.0 {
            arcs.push((cum, len));
        }
    }
    if arcs.is_empty() {
        return Ok(0.0);
    }
    let c = weighted_median(arcs.clone());
    Ok(arcs.iter().map(|&(f, l)| (f - c).abs() * l).sum())
}

/// Step quantile function of a nonnegative measure.
struct Quantiles {
    /// Cumulative masses `0 = c_0 < ... < c_n = M`.
    cum: Vec<f64>,
    pos: Vec<f64>,
    mass: f64,
}

impl Quantiles {
    fn new(m: &SignedMeasure1D) -> Result<Self> {
        let mut cum = Vec::with_capacity(m.atoms.len() + 1);
        let mut pos = Vec::with_capacity(m.atoms.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for &(x, w) in &m.atoms {
            if w < -1e-15 {
                return Err(invalid("weights", "W2 needs nonnegative measures"));
            }
            if w <= 0.0 {
                continue;
            }
            acc += w;
            cum.push(acc);
            pos.push(x);
        }
        Ok(Self { cum, pos, mass: acc })
    }

    /// Segments `(start, end, value)` of `t -> Q(t + shift)` on `[0, M)` for
    /// `shift` in `[0, M)`, with the lifted value `Q(t + M) = Q(t) + L`.
    fn shifted_segments(&self, shift: f64, period: f64, out: &mut Vec<(f64, f64, f64)>) {
        out.clear();
        let m = self.mass;
        for k in 0..self.pos.len() {
            let (a, b) = (self.cum[k] - shift, self.cum[k + 1] - shift);
            if b > 0.0 {
                out.push((a.max(0.0), b, self.pos[k]));
            }
        }
        for k in 0..self.pos.len() {
            let (a, b) = (self.cum[k] + m - shift, self.cum[k + 1] + m - shift);
            if a >= m {
                break;
            }
            out.push((a, b.min(m), self.pos[k] + period));
        }
    }
}

/// `int_0^M |Q_mu(t + theta) - Q_nu(t)|^2 dt`.
fn shifted_cost(qa: &Quantiles, qb: &Quantiles, theta: f64, period: f64, scratch: &mut Vec<(f64, f64, f64)>) -> f64 {
    let m = qb.mass;
    let turns = libm::floor(theta / m);
    let shift = (theta - turns * m).clamp(0.0, next_below(m));
    qa.shifted_segments(shift, period, scratch);
    let lift = turns * period;

    let mut cost = 0.0;
    let (mut ia, mut ib) = (0, 0);
    let mut t = 0.0;
    while ia < scratch.len() && ib < qb.pos.len() {
        let (_, ea, va) = scratch[ia];
        let eb = qb.cum[ib + 1];
        let end = ea.min(eb);
        if end > t {
            let d = va + lift - qb.pos[ib];
            cost += d * d * (end - t);
            t = end;
        }
        if ea <= end {
            ia += 1;
        }
        if eb <= end {
            ib += 1;
        }
    }
    cost
}

/// `W2` on the circle for nonnegative measures of equal mass.
pub fn w2_periodic(mu: &SignedMeasure1D, nu: &SignedMeasure1D) -> Result<f64> {
    check_masses(mu, nu)?;
    let qa = Quantiles::new(mu)?;
    let qb = Quantiles::new(nu)?;
    if qb.mass <= 0.0 || qa.pos.is_empty() || qb.pos.is_empty() {
        return Ok(0.0);
    }
    let period = mu.period;
    let mut scratch = Vec::with_capacity(2 * qa.pos.len() + 2);
    let mut f = |theta: f64| shifted_cost(&qa, &qb, theta, period, &mut scratch);

    // golden-section search on the convex cost over theta in [-M, M]
    let inv_phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    let (mut lo, mut hi) = (-qb.mass, qb.mass);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * qb.mass {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let best = f1.min(f2).min(f(0.0));
    Ok(libm::sqrt(best.max(0.0)))
}

/// Exact `W1` between two measures on the line.
fn w1_line(mut events: Vec<(f64, f64)>) -> f64 {
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let mut cum = 0.0;
    let mut total = 0.0;
    for k in 0..events.len().saturating_sub(1) {
        cum += events[k].1;
        total += cum.abs() * (events[k + 1].0 - events[k].0);
    }
    total
}

/// Directions `k pi / n`, `k = 0..n`.
pub fn slice_directions(n_slices: usize) -> Vec<f64> {
    (0..n_slices).map(|k| k as f64 * PI / n_slices as f64).collect()
}

/// Mean of `|sin theta|` over the slice directions: the factor a rigid unit
/// shift in `xi` picks up under slicing.
pub fn slice_shift_factor(n_slices: usize) -> f64 {
    let d = slice_directions(n_slices);
    d.iter().map(|t| libm::sin(*t).abs()).sum::<f64>() / d.len() as f64
}

/// Sliced `W1` on phase space: the `theta = 0` slice is the circle distance
/// of the x-marginals, the others project `x cos + xi sin` with `x` unrolled
/// on `[0, L)` and use the line distance.
pub fn w1_phase(g1: &Profile, g2: &Profile, n_slices: usize) -> Result<f64> {
    if g1.data.len() != g2.data.len() {
        return Err(Error::GridMismatch {
            expected: g1.data.len(),
            found: g2.data.len(),
        });
    }
    let (m1, m2) = (g1.mass(), g2.mass());
    if (m1 - m2).abs() > MASS_TOLERANCE {
        return Err(Error::MassMismatch { lhs: m1, rhs: m2 });
    }
    if n_slices == 0 {
        return Err(invalid("n_slices", "at least one direction is required"));
    }
    let grid = g1.grid;
    let xs = grid.x.centers();
    let xis = grid.xi.centers();
    let cell = grid.cell_measure();

    let mut total = 0.0;
    for theta in slice_directions(n_slices) {
        if theta == 0.0 {
            let a = SignedMeasure1D::from_density(&grid.x, &g1.marginal())?;
            let b = SignedMeasure1D::from_density(&grid.x, &g2.marginal())?;
            total += w1_periodic(&a, &b)?;
            continue;
        }
        let (c, s) = (libm::cos(theta), libm::sin(theta));
        let mut events = Vec::with_capacity(2 * grid.size());
        for (i, &x) in xs.iter().enumerate() {
            for (j, &xi) in xis.iter().enumerate() {
                let p = x * c + xi * s;
                let d = (g1.get(i, j) - g2.get(i, j)) * cell;
                if d != 0.0 {
                    events.push((p, d));
                }
            }
        }
        total += w1_line(events);
    }
    Ok(total / n_slices as f64)
}

/// [`w1_phase`] divided by [`slice_shift_factor`], so that a rigid shift of
/// length `h` in any single coordinate reads as roughly `h` times the mass.
pub fn w1_phase_isotropic(g1: &Profile, g2: &Profile, n_slices: usize) -> Result<f64> {
    Ok(w1_phase(g1, g2, n_slices)? / slice_shift_factor(n_slices))
}

/// `1/2 int |m + omega xi - u_ref|^2 g dxi dx`.
pub fn modulated_energy(g: &Profile, omega: f64, m: &[f64], u_ref: &[f64]) -> Result<f64> {
    g.grid.x.check(m)?;
    g.grid.x.check(u_ref)?;
    let xis = g.grid.xi.centers();
    let mut total = 0.0;
    for i in 0..g.grid.x.len() {
        let shift = m[i] - u_ref[i];
        total += g
            .row(i)
            .iter()
            .zip(&xis)
            .map(|(v, xi)| {
                let d = shift + omega * xi;
                d * d * v
            })
            .sum::<f64>();
    }
    Ok(0.5 * total * g.grid.cell_measure())
}

/// `int g log g`, with `0 log 0 = 0`.
pub fn boltzmann_entropy(g: &Profile) -> f64 {
    g.data
        .iter()
        .filter(|v| **v >= ENTROPY_FLOOR)
        .map(|v| v * libm::log(*v))
        .sum::<f64>()
        * g.grid.cell_measure()
}

#[inline]
pub fn standard_gaussian(xi: f64) -> f64 {
    libm::exp(-0.5 * xi * xi) / libm::sqrt(2.0 * PI)
}

/// `H(g | rho_ref N(0,1)) = int g log(g / mu)`.
pub fn relative_entropy_maxwellian(g: &Profile, rho_ref: &[f64]) -> Result<f64> {
    g.grid.x.check(rho_ref)?;
    let log_gauss: Vec<f64> = g
        .grid
        .xi
        .centers()
        .iter()
        .map(|xi| -0.5 * xi * xi - 0.5 * libm::log(2.0 * PI))
        .collect();
    let mut total = 0.0;
    for (i, &r) in rho_ref.iter().enumerate() {
        let row = g.row(i);
        if !(r > 0.0) {
            if row.iter().any(|v| *v >= ENTROPY_FLOOR) {
                return Err(Error::VanishingReference { cell: i });
            }
            continue;
        }
        let log_r = libm::log(r);
        for (v, lg) in row.iter().zip(&log_gauss) {
            if *v >= ENTROPY_FLOOR {
                total += v * (libm::log(*v) - log_r - lg);
            }
        }
    }
    Ok(total * g.grid.cell_measure())
}

/// `int |d_xi g + xi g|^2 / g`, centred differences in `xi`.
pub fn fisher_information(g: &Profile) -> f64 {
    let n = g.grid.xi.len();
    let dxi = g.grid.xi.dxi();
    let xis = g.grid.xi.centers();
    let mut total = 0.0;
    for i in 0..g.grid.x.len() {
        let row = g.row(i);
        for j in 0..n {
            let v = row[j];
            if v < ENTROPY_FLOOR {
                continue;
            }
            let d = if j == 0 {
                (row[1] - row[0]) / dxi
            } else if j == n - 1 {
                (row[n - 1] - row[n - 2]) / dxi
            } else {
                (row[j + 1] - row[j - 1]) / (2.0 * dxi)
            };
            let f = d + xis[j] * v;
            total += f * f / v;
        }
    }
    total * g.grid.cell_measure()
}

/// `int xi^2 g`.
pub fn second_xi_moment(g: &Profile) -> f64 {
    crate::domain::quadrature_x(&g.grid.x, &g.moment(2))
}

/// Centred periodic derivative.
pub fn centered_derivative(grid: &TorusGrid, f: &[f64]) -> Field {
    let n = f.len();
    let inv = 0.5 / grid.dx();
    (0..n).map(|i| (f[(i + 1) % n] - f[(i + n - 1) % n]) * inv).collect()
}

/// `e = d_x u + rho_phi`.
pub fn e_quantity(state: &MacroState, phi: &KernelSpec) -> Result<Field> {
    let grid = &state.grid;
    let rho_phi = convolve_periodic(grid, &state.rho, &phi.tabulate(grid))?;
    Ok(centered_derivative(grid, &state.u)
        .iter()
        .zip(&rho_phi)
        .map(|(a, b)| a + b)
        .collect())
}
