mod common;

use common::{circle_distance, transport_cost};
use monokin_core::metrics::{w1_periodic, w1_phase_isotropic, w2_periodic, SignedMeasure1D};
use monokin_core::{PhaseGrid, Profile, TorusGrid, XiGrid};
use std::f64::consts::PI;

fn normalized(grid: &TorusGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let v = grid.sample(f);
    let m = monokin_core::quadrature_x(grid, &v);
    v.iter().map(|x| x / m).collect()
}

fn cell_masses(grid: &TorusGrid, d: &[f64]) -> Vec<f64> {
    d.iter().map(|v| v * grid.dx()).collect()
}

#[test]
fn circle_w1_matches_transport_oracle() {
    let grid = TorusGrid::unit(128).unwrap();
    let a = normalized(&grid, |_| 1.0);
    let b = normalized(&grid, |x| 1.0 + (2.0 * PI * x).cos());
    let exact = w1_periodic(
        &SignedMeasure1D::from_density(&grid, &a).unwrap(),
        &SignedMeasure1D::from_density(&grid, &b).unwrap(),
    )
    .unwrap();
    let xs = grid.centers();
    let lp = transport_cost(&cell_masses(&grid, &a), &cell_masses(&grid, &b), |i, j| {
        circle_distance(xs[i], xs[j], 1.0)
    });
    assert!((exact - lp).abs() < 1e-8, "{exact} vs {lp}");
}

#[test]
fn circle_w2_matches_transport_oracle() {
    let grid = TorusGrid::unit(96).unwrap();
    let bump = |c: f64, s: f64| {
        move |x: f64| {
            let d = circle_distance(x, c, 1.0);
            (-0.5 * d * d / (s * s)).exp() + 0.05
        }
    };
    let a = normalized(&grid, bump(0.2, 0.05));
    let b = normalized(&grid, bump(0.7, 0.12));
    let w2 = w2_periodic(
        &SignedMeasure1D::from_density(&grid, &a).unwrap(),
        &SignedMeasure1D::from_density(&grid, &b).unwrap(),
    )
    .unwrap();
    let xs = grid.centers();
    let lp = transport_cost(&cell_masses(&grid, &a), &cell_masses(&grid, &b), |i, j| {
        circle_distance(xs[i], xs[j], 1.0).powi(2)
    });
    assert!((w2 - lp.sqrt()).abs() < 1e-8, "{w2} vs {}", lp.sqrt());
}

fn phase_lp(g1: &Profile, g2: &Profile) -> f64 {
    let grid = g1.grid;
    let cell = grid.cell_measure();
    let pts: Vec<(f64, f64)> = (0..grid.x.len())
        .flat_map(|i| (0..grid.xi.len()).map(move |j| (grid.x.center(i), grid.xi.center(j))))
        .collect();
    let a: Vec<f64> = g1.data.iter().map(|v| v * cell).collect();
    let b: Vec<f64> = g2.data.iter().map(|v| v * cell).collect();
    transport_cost(&a, &b, |i, j| {
        let dx = circle_distance(pts[i].0, pts[j].0, grid.x.length());
        let dv = pts[i].1 - pts[j].1;
        (dx * dx + dv * dv).sqrt()
    })
}

#[test]
fn isotropic_sliced_w1_tracks_transport_oracle() {
    let pg = PhaseGrid::new(TorusGrid::unit(16).unwrap(), XiGrid::new(16, 1.0).unwrap());
    let bump = |cx: f64, cv: f64, sx: f64, sv: f64| {
        move |x: f64, xi: f64| {
            let r2 = ((x - cx) / sx).powi(2) + ((xi - cv) / sv).powi(2);
            if r2 < 1.0 {
                (1.0 - r2).powi(2) + 1e-3
            } else {
                1e-3
            }
        }
    };
    let cases = [
        (bump(0.5, 0.0, 0.25, 0.5), bump(0.5, 0.25, 0.25, 0.5)),
        (bump(0.4, 0.0, 0.25, 0.5), bump(0.6, 0.0, 0.25, 0.5)),
        (bump(0.4, -0.2, 0.2, 0.4), bump(0.6, 0.2, 0.3, 0.5)),
        (bump(0.5, 0.0, 0.3, 0.6), bump(0.5, 0.0, 0.15, 0.3)),
    ];
    for (f1, f2) in cases {
        let g1 = Profile::from_fn(pg, f1);
        let mut g2 = Profile::from_fn(pg, f2);
        let s = g1.mass() / g2.mass();
        g2.data.iter_mut().for_each(|v| *v *= s);
        let sliced = w1_phase_isotropic(&g1, &g2, 16).unwrap();
        let lp = phase_lp(&g1, &g2);
        assert!((sliced - lp).abs() <= 0.1 * lp, "{sliced} vs {lp}");
    }
}
