//! Characteristics of the profile equation,
//! `X' = u(t, X) + omega(t) Sigma_1`, `Sigma' = -Sigma d_x u(t, X) - rho_phi(t, X) Sigma`
//! (only the first component feels `d_x u` for unidirectional flows), with the
//! tangent flow of `(X, Sigma_1)` integrated alongside so that the Jacobian
//! identity `det = exp(-int rho_phi)` can be checked.
//!
//! Coefficients are stored at snapshot times and interpolated linearly in
//! time; in space `u` is a periodic cubic spline and `rho_phi` is linear.

use alloc::vec::Vec;

use crate::domain::{Field, PhaseGrid, Profile, TorusGrid};
use crate::error::{invalid, Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::linalg::cyclic_thomas;

/// Largest supported number of `Sigma` components.
pub const MAX_DIM: usize = 4;
const STATE: usize = MAX_DIM + 6;

/// Periodic cubic spline through cell-centred samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSpline {
    grid: TorusGrid,
    values: Field,
    second: Field,
}

impl PeriodicSpline {
    pub fn new(grid: TorusGrid, values: &[f64]) -> Result<Self> {
        grid.check(values)?;
        let n = grid.len();
        let h = grid.dx();
        let rhs: Field = (0..n)
            .map(|i| 6.0 * (values[(i + 1) % n] - 2.0 * values[i] + values[(i + n - 1) % n]) / (h * h))
            .collect();
        let ones = alloc::vec![1.0; n];
        let fours = alloc::vec![4.0; n];
        let second = cyclic_thomas(&ones, &fours, &ones, &rhs)?;
        Ok(Self {
            grid,
            values: values.to_vec(),
            second,
        })
    }

    /// `(s, s', s'')` at `x`.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.grid.len();
        let h = self.grid.dx();
        let s = self.grid.wrap_position(x) / h - 0.5;
        let fl = libm::floor(s);
        let t = s - fl;
        let i = self.grid.wrap(fl as isize);
        let j = if i + 1 == n { 0 } else { i + 1 };
        let (f0, f1) = (self.values[i], self.values[j]);
        let (m0, m1) = (self.second[i], self.second[j]);
        let r = 1.0 - t;
        let v = r * f0 + t * f1 + h * h / 6.0 * ((r * r * r - r) * m0 + (t * t * t - t) * m1);
        let d = (f1 - f0) / h + h / 6.0 * (-(3.0 * r * r - 1.0) * m0 + (3.0 * t * t - 1.0) * m1);
        let dd = r * m0 + t * m1;
        (v, d, dd)
    }
}

/// Linear interpolant value and slope at `x`.
#[inline]
fn linear_eval(grid: &TorusGrid, f: &[f64], x: f64) -> (f64, f64) {
    let n = grid.len();
    let h = grid.dx();
    let s = grid.wrap_position(x) / h - 0.5;
    let fl = libm::floor(s);
    let w = s - fl;
    let i = grid.wrap(fl as isize);
    let j = if i + 1 == n { 0 } else { i + 1 };
    ((1.0 - w) * f[i] + w * f[j], (f[j] - f[i]) / h)
}

/// Velocity and `rho_phi` fields along a solver trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTrack {
    pub grid: TorusGrid,
    pub times: Vec<f64>,
    velocity: Vec<PeriodicSpline>,
    rho_phi: Vec<Field>,
    /// Knudsen number of the modulated variant, `omega = eps e^{-t/eps}`.
    pub epsilon: Option<f64>,
}

/// Pointwise coefficients at `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub u: f64,
    pub u_x: f64,
    pub u_xx: f64,
    pub rho_phi: f64,
    pub rho_phi_x: f64,
    pub omega: f64,
}

impl CoefficientTrack {
    /// `times` strictly increasing; one entry means constant in time.
    pub fn new(grid: TorusGrid, times: Vec<f64>, velocity: &[Field], rho_phi: Vec<Field>) -> Result<Self> {
        if times.is_empty() || times.len() != velocity.len() || times.len() != rho_phi.len() {
            return Err(invalid("times", "need one velocity and one rho_phi field per time"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times", "must be strictly increasing"));
        }
        for f in &rho_phi {
            grid.check(f)?;
        }
        let velocity = velocity
            .iter()
            .map(|u| PeriodicSpline::new(grid, u))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            times,
            velocity,
            rho_phi,
            epsilon: None,
        })
    }

    /// Track through the snapshots of an Euler-alignment run.
    pub fn from_eas(snapshots: &[crate::eas::EasState]) -> Result<Self> {
        let grid = *snapshots
            .first()
            .ok_or_else(|| invalid("snapshots", "empty trajectory"))?
            .grid();
        let times = snapshots.iter().map(|s| s.t()).collect();
        let u: Vec<Field> = snapshots.iter().map(|s| s.state.u.clone()).collect();
        let r = snapshots.iter().map(|s| s.rho_phi.clone()).collect();
        Self::new(grid, times, &u, r)
    }

    pub fn stationary(grid: TorusGrid, u: &[f64], rho_phi: &[f64]) -> Result<Self> {
        Self::new(grid, alloc::vec![0.0], &[u.to_vec()], alloc::vec![rho_phi.to_vec()])
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        if self.times.len() == 1 {
            f64::INFINITY
        } else {
            self.times[self.times.len() - 1]
        }
    }

    pub fn covers(&self, t: f64) -> bool {
        let slack = 1e-12 * self.end().abs().clamp(1.0, 1e12);
        t >= self.start() - slack && t <= self.end() + slack
    }

    pub fn omega(&self, t: f64) -> f64 {
        self.epsilon.map_or(0.0, |e| e * libm::exp(-t / e))
    }

    pub fn at(&self, t: f64, x: f64) -> Coefficients {
        let (k, w) = self.locate(t);
        let (u0, ux0, uxx0) = self.velocity[k].eval(x);
        let (r0, rx0) = linear_eval(&self.grid, &self.rho_phi[k], x);
        let (u, u_x, u_xx, rho_phi, rho_phi_x) = if w == 0.0 {
            (u0, ux0, uxx0, r0, rx0)
        } else {
            let (u1, ux1, uxx1) = self.velocity[k + 1].eval(x);
            let (r1, rx1) = linear_eval(&self.grid, &self.rho_phi[k + 1], x);
            let v = 1.0 - w;
            (
                v * u0 + w * u1,
                v * ux0 + w * ux1,
                v * uxx0 + w * uxx1,
                v * r0 + w * r1,
                v * rx0 + w * rx1,
            )
        };
        Coefficients {
            u,
            u_x,
            u_xx,
            rho_phi,
            rho_phi_x,
            omega: self.omega(t),
        }
    }

    /// Interval index and weight of the later snapshot.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 2, 1.0);
        }
        let k = self.times.partition_point(|s| *s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// `sigma[k]` is the `Sigma` vector at `times[k]`.
    pub sigma: Vec<Vec<f64>>,
    /// Determinant of the `(X, Sigma_1)` tangent map.
    pub jacobian_det: Vec<f64>,
    /// `int_{t_0}^t rho_phi(X(s)) ds`.
    pub rho_phi_integral: Vec<f64>,
}

impl CharTrajectory {
    pub fn sigma_norm(&self, k: usize) -> f64 {
        libm::sqrt(self.sigma[k].iter().map(|s| s * s).sum())
    }
}

/// RK4 right-hand side on `[X, Sigma_1..Sigma_n, J11, J12, J21, J22, I]`.
#[inline]
fn rhs(track: &CoefficientTrack, t: f64, y: &[f64; STATE], n: usize) -> [f64; STATE] {
    let c = track.at(t, y[0]);
    let mut out = [0.0; STATE];
    let s1 = y[1];
    out[0] = c.u + c.omega * s1;
    out[1] = -s1 * (c.u_x + c.rho_phi);
    for k in 2..=n {
        out[k] = -c.rho_phi * y[k];
    }
    let a = [c.u_x, c.omega, -s1 * (c.u_xx + c.rho_phi_x), -(c.u_x + c.rho_phi)];
    let j = &y[n + 1..n + 5];
    out[n + 1] = a[0] * j[0] + a[1] * j[2];
    out[n + 2] = a[0] * j[1] + a[1] * j[3];
    out[n + 3] = a[2] * j[0] + a[3] * j[2];
    out[n + 4] = a[2] * j[1] + a[3] * j[3];
    out[n + 5] = c.rho_phi;
    out
}

#[inline]
fn rk4_step(track: &CoefficientTrack, t: f64, y: &[f64; STATE], h: f64, n: usize) -> [f64; STATE] {
    let len = n + 6;
    let add = |base: &[f64; STATE], k: &[f64; STATE], s: f64| {
        let mut o = *base;
        for i in 0..len {
            o[i] += s * k[i];
        }
        o
    };
    let k1 = rhs(track, t, y, n);
    let k2 = rhs(track, t + 0.5 * h, &add(y, &k1, 0.5 * h), n);
    let k3 = rhs(track, t + 0.5 * h, &add(y, &k2, 0.5 * h), n);
    let k4 = rhs(track, t + h, &add(y, &k3, h), n);
    let mut o = *y;
    for i in 0..len {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

fn initial_state(x0: f64, sigma0: &[f64]) -> Result<([f64; STATE], usize)> {
    let n = sigma0.len();
    if n == 0 || n > MAX_DIM {
        return Err(invalid("sigma0", "dimension must lie in 1..=4"));
    }
    let mut y = [0.0; STATE];
    y[0] = x0;
    y[1..=n].copy_from_slice(sigma0);
    y[n + 1] = 1.0;
    y[n + 4] = 1.0;
    Ok((y, n))
}

fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    Ok(libm::ceil((t1 - t0).abs() / dt - 1e-9).max(0.0) as usize)
}

fn check_range(track: &CoefficientTrack, t: f64) -> Result<()> {
    if !track.covers(t) {
        return Err(Error::TimeRange {
            t,
            start: track.start(),
            end: track.end(),
        });
    }
    Ok(())
}

/// RK4 from `(x0, sigma0)` at `t0` to `t1` (either direction) with steps of at
/// most `dt`, recording every step.
pub fn integrate_characteristics(
    track: &CoefficientTrack,
    x0: f64,
    sigma0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<CharTrajectory> {
    check_range(track, t0)?;
    check_range(track, t1)?;
    let (mut y, n) = initial_state(x0, sigma0)?;
    let steps = step_count(t0, t1, dt)?;
    let h = if steps == 0 { 0.0 } else { (t1 - t0) / steps as f64 };
    let mut traj = CharTrajectory {
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        sigma: Vec::with_capacity(steps + 1),
        jacobian_det: Vec::with_capacity(steps + 1),
        rho_phi_integral: Vec::with_capacity(steps + 1),
    };
    let record = |traj: &mut CharTrajectory, t: f64, y: &[f64; STATE]| {
        traj.times.push(t);
        traj.x.push(track.grid.wrap_position(y[0]));
        traj.sigma.push(y[1..=n].to_vec());
        traj.jacobian_det.push(y[n + 1] * y[n + 4] - y[n + 2] * y[n + 3]);
        traj.rho_phi_integral.push(y[n + 5]);
    };
    record(&mut traj, t0, &y);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        y = rk4_step(track, t, &y, h, n);
        if y[..n + 6].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("characteristic"));
        }
        record(&mut traj, t0 + (k + 1) as f64 * h, &y);
    }
    Ok(traj)
}

/// Largest relative deviation of the tangent determinant from `exp(-int rho_phi)`.
pub fn jacobian_identity_check(traj: &CharTrajectory) -> f64 {
    traj.jacobian_det
        .iter()
        .zip(&traj.rho_phi_integral)
        .map(|(d, i)| {
            let e = libm::exp(-i);
            (d - e).abs() / e
        })
        .fold(0.0, f64::max)
}

/// Backward reconstruction of `g(t, x, xi)` at a single node: trace to
/// `track.start()` and weight `g0` by `exp(int rho_phi)`. `None` when the
/// foot leaves `|xi| <= xi_max`.
pub fn pushforward_node(
    track: &CoefficientTrack,
    g0: &impl Fn(f64, f64) -> f64,
    x: f64,
    xi: f64,
    t: f64,
    dt: f64,
    xi_max: f64,
) -> Result<Option<f64>> {
    check_range(track, t)?;
    let t0 = track.start();
    let (mut y, n) = initial_state(x, &[xi])?;
    let steps = step_count(t, t0, dt)?;
    if steps > 0 {
        let h = (t0 - t) / steps as f64;
        for k in 0..steps {
            y = rk4_step(track, t + k as f64 * h, &y, h, n);
        }
    }
    if !(y[1].abs() <= xi_max) {
        return Ok(None);
    }
    // y[n + 5] = int_t^{t0} rho_phi = -int_{t0}^t rho_phi
    Ok(Some(g0(track.grid.wrap_position(y[0]), y[1]) * libm::exp(-y[n + 5])))
}

/// Push-forward of `g0` to time `t` on `grid`; also returns how many nodes
/// traced back outside the xi box.
pub fn pushforward_reconstruct(
    track: &CoefficientTrack,
    g0: &impl Fn(f64, f64) -> f64,
    grid: PhaseGrid,
    t: f64,
    dt: f64,
) -> Result<(Profile, usize)> {
    let mut g = Profile::zeros(grid);
    g.t = t;
    let mut exits = 0;
    for i in 0..grid.x.len() {
        for j in 0..grid.xi.len() {
            match pushforward_node(track, g0, grid.x.center(i), grid.xi.center(j), t, dt, grid.xi.xi_max())? {
                Some(v) => g.data[grid.index(i, j)] = v,
                None => exits += 1,
            }
        }
    }
    Ok((g, exits))
}

/// Fit `log |Sigma(t)|` against `t` after discarding the first 10% of the
/// time range.
pub fn squeeze_rate(traj: &CharTrajectory) -> Result<LinearFit> {
    let (t0, t1) = match (traj.times.first(), traj.times.last()) {
        (Some(a), Some(b)) if b > a => (*a, *b),
        _ => return Err(invalid("trajectory", "needs a positive time range")),
    };
    let cut = t0 + 0.1 * (t1 - t0);
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    for (k, &t) in traj.times.iter().enumerate() {
        let s = traj.sigma_norm(k);
        if t >= cut && s > 1e-300 {
            ts.push(t);
            ls.push(libm::log(s));
        }
    }
    if ts.len() < 2 {
        return Err(invalid("trajectory", "|Sigma| underflows in the fit window"));
    }
    linear_fit(&ts, &ls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn unit_damping(n: usize) -> CoefficientTrack {
        let g = TorusGrid::unit(n).unwrap();
        CoefficientTrack::stationary(g, &vec![0.0; n], &vec![1.0; n]).unwrap()
    }

    #[test]
    fn spline_reproduces_trigonometric_data() {
        let g = TorusGrid::unit(64).unwrap();
        let s = PeriodicSpline::new(g, &g.sample(|x| libm::sin(2.0 * PI * x))).unwrap();
        for k in 0..50 {
            let x = k as f64 / 50.0 + 0.003;
            let (v, d, _) = s.eval(x);
            assert!((v - libm::sin(2.0 * PI * x)).abs() < 1e-6);
            assert!((d - 2.0 * PI * libm::cos(2.0 * PI * x)).abs() < 1e-3);
        }
        let (v, _, _) = s.eval(g.center(5));
        assert!((v - libm::sin(2.0 * PI * g.center(5))).abs() < 1e-14);
    }

    #[test]
    fn linear_damping_closed_form() {
        let tr = unit_damping(8);
        let traj = integrate_characteristics(&tr, 0.3, &[1.0], 0.0, 2.0, 1e-3).unwrap();
        let k = traj.times.len() - 1;
        assert!((traj.sigma[k][0] - libm::exp(-2.0)).abs() < 1e-12);
        assert!((traj.x[k] - 0.3).abs() < 1e-15);
        assert!(jacobian_identity_check(&traj) < 1e-10);
        let fit = squeeze_rate(&traj).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-6 && fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let tr = unit_damping(8);
        let err = |dt: f64| {
            let traj = integrate_characteristics(&tr, 0.0, &[1.0], 0.0, 1.0, dt).unwrap();
            (traj.sigma.last().unwrap()[0] - libm::exp(-1.0)).abs()
        };
        let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
        for r in [e1 / e2, e2 / e3] {
            assert!((14.0..18.0).contains(&r), "{r}");
        }
    }

    #[test]
    fn unidirectional_components() {
        let g = TorusGrid::unit(64).unwrap();
        let u = g.sample(|x| 0.1 * libm::sin(2.0 * PI * x));
        let tr = CoefficientTrack::stationary(g, &u, &vec![1.0; 64]).unwrap();
        let traj = integrate_characteristics(&tr, 0.2, &[1.0, 0.5, -0.25], 0.0, 1.0, 1e-3).unwrap();
        let last = traj.sigma.last().unwrap();
        assert!((last[1] - 0.5 * libm::exp(-1.0)).abs() < 1e-12);
        assert!((last[2] + 0.25 * libm::exp(-1.0)).abs() < 1e-12);
    }

    #[test]
    fn backward_forward_round_trip() {
        let g = TorusGrid::unit(64).unwrap();
        let u = g.sample(|x| 0.2 * libm::cos(2.0 * PI * x));
        let r = g.sample(|x| 1.0 + 0.3 * libm::sin(2.0 * PI * x));
        let u2: Vec<f64> = u.iter().map(|v| 0.5 * v).collect();
        let tr = CoefficientTrack::new(g, vec![0.0, 1.0], &[u, u2], vec![r.clone(), r]).unwrap();
        let fwd = integrate_characteristics(&tr, 0.4, &[0.7], 0.0, 1.0, 1e-3).unwrap();
        let k = fwd.times.len() - 1;
        let back = integrate_characteristics(&tr, fwd.x[k], &fwd.sigma[k], 1.0, 0.0, 1e-3).unwrap();
        let j = back.times.len() - 1;
        assert!((back.x[j] - 0.4).abs() < 1e-8 && (back.sigma[j][0] - 0.7).abs() < 1e-8);
        assert!(jacobian_identity_check(&fwd) < 1e-6);
        assert!(matches!(
            integrate_characteristics(&tr, 0.0, &[1.0], 0.0, 1.5, 1e-3),
            Err(Error::TimeRange { .. })
        ));
    }

    #[test]
    fn pushforward_closed_form() {
        let tr = unit_damping(8);
        let pg = PhaseGrid::new(tr.grid, crate::domain::XiGrid::new(32, 4.0).unwrap());
        let g0 = |x: f64, xi: f64| (1.0 + 0.5 * libm::sin(2.0 * PI * x)) * libm::exp(-xi * xi);
        let (g, exits) = pushforward_reconstruct(&tr, &g0, pg, 0.0, 1e-3).unwrap();
        assert_eq!(exits, 0);
        assert_eq!(g.data, Profile::from_fn(pg, g0).data);
        let t = 0.5;
        let (g, exits) = pushforward_reconstruct(&tr, &g0, pg, t, 1e-3).unwrap();
        let s = libm::exp(t);
        // feet outside the box are assigned zero
        let exact = Profile::from_fn(pg, |x, xi| if (s * xi).abs() <= 4.0 { s * g0(x, s * xi) } else { 0.0 });
        let d = g.l1_distance(&exact).unwrap();
        assert!(d < 1e-9, "{d}");
        assert!(exits > 0);
    }
}
