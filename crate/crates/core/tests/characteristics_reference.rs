use monokin_core::characteristics::{
    integrate_characteristics, jacobian_identity_check, squeeze_rate, CoefficientTrack,
};
use monokin_core::eas::{initial, EasSolver};
use monokin_core::kernels::KernelSpec;
use monokin_core::schedule::TimeStep;
use monokin_core::TorusGrid;

const SNAPSHOT_DT: f64 = 0.004;

fn reference_track(nx: usize, t_final: f64, u0: fn(f64) -> f64) -> CoefficientTrack {
    let grid = TorusGrid::unit(nx).unwrap();
    let sv = EasSolver::new(grid, KernelSpec::CONSTANT);
    let s0 = sv.state(vec![1.0; nx], grid.sample(u0), 0.0).unwrap();
    let n = (t_final / SNAPSHOT_DT).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * SNAPSHOT_DT).collect();
    let run = sv.run(s0, &times, TimeStep::Fixed(SNAPSHOT_DT)).unwrap();
    CoefficientTrack::from_eas(&run.snapshots).unwrap()
}

#[test]
fn jacobian_identity_on_reference_runs() {
    for u0 in [initial::symmetric, initial::asymmetric] {
        let tr = reference_track(256, 1.0, u0);
        for k in 0..10 {
            let x0 = 0.05 + 0.1 * k as f64;
            let xi0 = 0.51 - 0.1 * k as f64;
            let traj = integrate_characteristics(&tr, x0, &[xi0], 0.0, 1.0, 1e-3).unwrap();
            assert!(jacobian_identity_check(&traj) <= 1e-6);
            assert!(traj.jacobian_det.iter().all(|d| *d > 0.0));
        }
    }
}

#[test]
fn jacobian_residual_shrinks_with_dt() {
    let tr = reference_track(128, 1.0, initial::asymmetric);
    let residual = |dt: f64| {
        let traj = integrate_characteristics(&tr, 0.37, &[0.8], 0.0, 1.0, dt).unwrap();
        jacobian_identity_check(&traj)
    };
    let (a, b, c) = (residual(0.016), residual(0.008), residual(0.004));
    assert!(b < a && c < b, "{a:e} {b:e} {c:e}");
}

#[test]
fn zero_of_symmetric_velocity_stays_put() {
    let tr = reference_track(256, 1.0, initial::symmetric);
    let traj = integrate_characteristics(&tr, 0.25, &[0.3], 0.0, 1.0, 1e-3).unwrap();
    assert!(traj.x.iter().all(|x| (x - 0.25).abs() <= 1e-6));
}

#[test]
fn symmetric_run_squeezes_exponentially() {
    let tr = reference_track(256, 6.0, initial::symmetric);
    for k in 0..20 {
        let x0 = (k as f64 * 0.618_033_988_75) % 1.0;
        let traj = integrate_characteristics(&tr, x0, &[0.3], 0.0, 6.0, 1e-3).unwrap();
        let fit = squeeze_rate(&traj).unwrap();
        // rho_phi = 1 for unit mass and phi = 1
        assert!(fit.slope <= -0.5 && fit.r_squared >= 0.99, "{fit:?}");
    }
}
