//! Grids, field containers, quadrature and run parameters shared by every solver.
//!
//! Fields are cell-centred `Vec<f64>` on a periodic [`TorusGrid`]. Phase-space
//! profiles live on the product of the torus with a truncated, symmetric
//! [`XiGrid`] and are stored row-major with one row per x-cell.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// A cell-centred field on a [`TorusGrid`].
pub type Field = Vec<f64>;

/// Periodic cell grid on `[0, length)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    n: usize,
    length: f64,
}

impl TorusGrid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < Self::MIN_CELLS {
            return Err(invalid("nx", "at least 4 cells are required"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(invalid("length", "domain period must be positive"));
        }
        Ok(Self { n, length })
    }

    /// Grid on the unit torus.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }

    /// Periodic index: `wrap(i + k * n) == wrap(i)` for every integer `k`.
    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n as isize) as usize
    }

    /// Reduce a position into `[0, length)`.
    #[inline]
    pub fn wrap_position(&self, x: f64) -> f64 {
        let r = rem_euclid(x, self.length);
        // rem_euclid can round up to `length` for tiny negative inputs
        if r >= self.length {
            0.0
        } else {
            r
        }
    }

    /// Geodesic distance on the circle.
    #[inline]
    pub fn periodic_distance(&self, a: f64, b: f64) -> f64 {
        let d = rem_euclid(a - b, self.length);
        d.min(self.length - d)
    }

    /// Sample a function at the cell centres.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        (0..self.n).map(|i| f(self.center(i))).collect()
    }

    /// Periodic linear interpolation of cell-centred values.
    pub fn interpolate(&self, field: &[f64], x: f64) -> f64 {
        let s = self.wrap_position(x) / self.dx() - 0.5;
        let fl = libm::floor(s);
        let w = s - fl;
        let i = self.wrap(fl as isize);
        let j = if i + 1 == self.n { 0 } else { i + 1 };
        (1.0 - w) * field[i] + w * field[j]
    }

    pub fn check(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.n {
            return Err(Error::GridMismatch {
                expected: self.n,
                found: field.len(),
            });
        }
        Ok(())
    }
}

/// Symmetric truncated velocity grid on `[-xi_max, xi_max]`.
///
/// The cell count is even so that centres come in exact `±` pairs: centre `j`
/// is `(j + 1/2 - n/2) * dxi`, which negates bit-for-bit under `j -> n-1-j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiGrid {
    n: usize,
    xi_max: f64,
}

impl XiGrid {
    pub fn new(n: usize, xi_max: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(invalid("nxi", "an even count of at least 4 cells is required"));
        }
        if !(xi_max > 0.0 && xi_max.is_finite()) {
            return Err(invalid("xi_max", "must be positive"));
        }
        Ok(Self { n, xi_max })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    #[inline]
    pub fn dxi(&self) -> f64 {
        2.0 * self.xi_max / self.n as f64
    }

    #[inline]
    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5 - (self.n / 2) as f64) * self.dxi()
    }

    /// Face `j` sits between centres `j - 1` and `j`; faces run `0..=n`.
    #[inline]
    pub fn face(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.dxi()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.center(j)).collect()
    }

    /// Index of the mirror cell `-xi`.
    #[inline]
    pub fn mirror(&self, j: usize) -> usize {
        self.n - 1 - j
    }
}

/// Product grid for `(x, xi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub x: TorusGrid,
    pub xi: XiGrid,
}

impl PhaseGrid {
    pub fn new(x: TorusGrid, xi: XiGrid) -> Self {
        Self { x, xi }
    }

    #[inline]
    pub fn cell_measure(&self) -> f64 {
        self.x.dx() * self.xi.dxi()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.xi.len() + j
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.x.len() * self.xi.len()
    }
}

/// Midpoint rule `sum_i f_i dx` on the torus.
pub fn quadrature_x(grid: &TorusGrid, field: &[f64]) -> f64 {
    field.iter().sum::<f64>() * grid.dx()
}

/// Product midpoint rule over the phase grid.
pub fn quadrature_phase(g: &Profile) -> f64 {
    g.data.iter().sum::<f64>() * g.grid.cell_measure()
}

/// Nonnegative distribution `g(x, xi)` on a [`PhaseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub grid: PhaseGrid,
    /// Row-major values, row = x-cell.
    pub data: Vec<f64>,
    pub t: f64,
}

impl Profile {
    pub fn zeros(grid: PhaseGrid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.size()],
            t: 0.0,
        }
    }

    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.size());
        for i in 0..grid.x.len() {
            let x = grid.x.center(i);
            for j in 0..grid.xi.len() {
                data.push(f(x, grid.xi.center(j)));
            }
        }
        Self { grid, data, t: 0.0 }
    }

    /// `rho(x) * density(xi)` sampled on the grid.
    pub fn separable(grid: PhaseGrid, rho: &[f64], density: impl Fn(f64) -> f64) -> Result<Self> {
        grid.x.check(rho)?;
        let column: Vec<f64> = grid.xi.centers().into_iter().map(density).collect();
        let mut data = Vec::with_capacity(grid.size());
        for &r in rho {
            data.extend(column.iter().map(|c| r * c));
        }
        Ok(Self { grid, data, t: 0.0 })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.xi.len();
        &self.data[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.grid.xi.len();
        &mut self.data[i * n..(i + 1) * n]
    }

    /// `int g dxi` per x-cell.
    pub fn marginal(&self) -> Field {
        self.moment(0)
    }

    /// `int xi^k g dxi` per x-cell.
    pub fn moment(&self, k: i32) -> Field {
        let xi = self.grid.xi.centers();
        let dxi = self.grid.xi.dxi();
        (0..self.grid.x.len())
            .map(|i| self.row(i).iter().zip(&xi).map(|(g, &s)| g * powi(s, k)).sum::<f64>() * dxi)
            .collect()
    }

    pub fn mass(&self) -> f64 {
        quadrature_phase(self)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// L1 distance `sum |g1 - g2| dx dxi`.
    pub fn l1_distance(&self, other: &Profile) -> Result<f64> {
        if self.data.len() != other.data.len() {
            return Err(Error::GridMismatch {
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_measure())
    }
}

/// Euclidean remainder for floats (`core` lacks `f64::rem_euclid`).
#[inline]
pub fn rem_euclid(a: f64, b: f64) -> f64 {
    let r = libm::fmod(a, b);
    if r < 0.0 {
        r + b
    } else {
        r
    }
}

#[inline]
fn powi(x: f64, k: i32) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => libm::pow(x, k as f64),
    }
}

/// Density and velocity snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub grid: TorusGrid,
    pub rho: Field,
    pub u: Field,
    /// Modulated velocity, when the solver carries one.
    pub m: Option<Field>,
    pub t: f64,
}

impl MacroState {
    pub fn new(grid: TorusGrid, rho: Field, u: Field) -> Result<Self> {
        grid.check(&rho)?;
        grid.check(&u)?;
        if let Some((cell, &value)) = rho.iter().enumerate().find(|(_, r)| !(**r >= 0.0)) {
            return Err(Error::NegativeMarginal { cell, value });
        }
        Ok(Self {
            grid,
            rho,
            u,
            m: None,
            t: 0.0,
        })
    }

    pub fn mass(&self) -> f64 {
        quadrature_x(&self.grid, &self.rho)
    }

    pub fn momentum(&self) -> f64 {
        self.rho.iter().zip(&self.u).map(|(r, u)| r * u).sum::<f64>() * self.grid.dx()
    }

    /// Macroscopic energy `1/2 int u^2 rho`.
    pub fn energy(&self) -> f64 {
        0.5 * self.rho.iter().zip(&self.u).map(|(r, u)| r * u * u).sum::<f64>() * self.grid.dx()
    }
}

/// Knudsen number, noise, mollification resolution and mollifier exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationParams {
    pub epsilon: f64,
    pub sigma: f64,
    pub delta: f64,
    pub alpha: f64,
}

impl ModulationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be nonnegative"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// The Fokker-Planck scheme additionally needs `sigma > 0`.
    pub fn validate_fp(&self) -> Result<()> {
        self.validate()?;
        if self.sigma <= 0.0 {
            return Err(invalid("sigma", "the Fokker-Planck scheme requires sigma > 0"));
        }
        Ok(())
    }
}

/// Named scalar diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quantity {
    Mass,
    Momentum,
    Energy,
    ModulatedEnergy,
    BoltzmannEntropy,
    RelativeEntropy,
    FisherInformation,
    EMin,
    EMax,
    ETotal,
    W1Rho,
    W1Momentum,
    W1Profile,
    SecondXiMoment,
}

impl Quantity {
    pub const ALL: [Quantity; 14] = [
        Quantity::Mass,
        Quantity::Momentum,
        Quantity::Energy,
        Quantity::ModulatedEnergy,
        Quantity::BoltzmannEntropy,
        Quantity::RelativeEntropy,
        Quantity::FisherInformation,
        Quantity::EMin,
        Quantity::EMax,
        Quantity::ETotal,
        Quantity::W1Rho,
        Quantity::W1Momentum,
        Quantity::W1Profile,
        Quantity::SecondXiMoment,
    ];

    /// Column order of the diagnostics CSV (after `t`). `e_max` is kept in
    /// memory only.
    pub const CSV_COLUMNS: [Quantity; 13] = [
        Quantity::Mass,
        Quantity::Momentum,
        Quantity::Energy,
        Quantity::ModulatedEnergy,
        Quantity::BoltzmannEntropy,
        Quantity::RelativeEntropy,
        Quantity::FisherInformation,
        Quantity::EMin,
        Quantity::ETotal,
        Quantity::W1Rho,
        Quantity::W1Momentum,
        Quantity::W1Profile,
        Quantity::SecondXiMoment,
    ];

    pub fn csv_name(self) -> &'static str {
        match self {
            Quantity::Mass => "mass",
            Quantity::Momentum => "momentum",
            Quantity::Energy => "energy",
            Quantity::ModulatedEnergy => "mod_energy",
            Quantity::BoltzmannEntropy => "boltzmann",
            Quantity::RelativeEntropy => "rel_entropy",
            Quantity::FisherInformation => "fisher",
            Quantity::EMin => "e_min",
            Quantity::EMax => "e_max",
            Quantity::ETotal => "e_total",
            Quantity::W1Rho => "w1_rho",
            Quantity::W1Momentum => "w1_mom",
            Quantity::W1Profile => "w1_g",
            Quantity::SecondXiMoment => "xi_m2",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// One sample of the diagnostics time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    values: [Option<f64>; 14],
}

impl DiagnosticsRecord {
    pub fn new(t: f64) -> Self {
        Self { t, values: [None; 14] }
    }

    /// Record a value; non-finite values are rejected.
    pub fn set(&mut self, q: Quantity, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(q.csv_name()));
        }
        self.values[q.slot()] = Some(value);
        Ok(())
    }

    pub fn get(&self, q: Quantity) -> Option<f64> {
        self.values[q.slot()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Quantity, f64)> + '_ {
        Quantity::ALL.iter().filter_map(move |&q| self.get(q).map(|v| (q, v)))
    }
}
