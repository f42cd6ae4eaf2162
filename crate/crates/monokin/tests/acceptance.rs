//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
//! Runs without the libtest harness so the lines are always printed.

use std::f64::consts::PI;
use std::time::Instant;

use monokin::config::{RunConfig, Scenario, SweepModel, SweepSpec};
use monokin::sweep::run_sweep;
use monokin_core::characteristics::{
    integrate_characteristics, jacobian_identity_check, pushforward_reconstruct, squeeze_rate, CoefficientTrack,
};
use monokin_core::eas::{e_evolution_check, initial, symmetry_residual, EasSolver, EasState};
use monokin_core::fokker_planck::{ou_implicit_substep, sigma_for_epsilon, FpSolver};
use monokin_core::kernels::{favre_properties_check, KernelSpec, Mollifier};
use monokin_core::metrics::second_xi_moment;
use monokin_core::particles::{
    empirical_vs_grid, sample_swarm, step_cs, step_langevin, LangevinParams, MeanField, Swarm,
};
use monokin_core::profile::{gaussian_profile, ProfileSolver};
use monokin_core::schedule::TimeStep;
use monokin_core::vlasov::VlasovSolver;
use monokin_core::{ModulationParams, PhaseGrid, Profile, TorusGrid, XiGrid};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

type Check = fn() -> Verdict;

const CRITERIA: [(&str, Check); 10] = [
    ("conservation", conservation),
    ("analytic_fixed_points", analytic_fixed_points),
    ("characteristic_identities", characteristic_identities),
    ("oracle_equivalence", oracle_equivalence),
    ("unidirectional_squeezing", unidirectional_squeezing),
    ("symmetry_preservation", symmetry_preservation),
    ("vlasov_rates", vlasov_rates),
    ("fp_rates", fp_rates),
    ("favre_filter", favre_filter),
    ("monte_carlo", monte_carlo),
];

fn reference_xi_max() -> f64 {
    8.0 * 0.1f64.sqrt()
}

fn phase(nx: usize, nxi: usize, xi_max: f64) -> PhaseGrid {
    PhaseGrid::new(TorusGrid::unit(nx).unwrap(), XiGrid::new(nxi, xi_max).unwrap())
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn eas_track(nx: usize, t_final: f64, spacing: f64, u0: fn(f64) -> f64) -> (Vec<EasState>, CoefficientTrack) {
    let grid = TorusGrid::unit(nx).unwrap();
    let sv = EasSolver::new(grid, KernelSpec::CONSTANT);
    let s0 = sv.state(vec![1.0; nx], grid.sample(u0), 0.0).unwrap();
    let n = (t_final / spacing).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * spacing).collect();
    let run = sv.run(s0, &times, TimeStep::Fixed(spacing)).unwrap();
    let track = CoefficientTrack::from_eas(&run.snapshots).unwrap();
    (run.snapshots, track)
}

fn conservation() -> Verdict {
    let t_end = 0.5;
    let mut worst: Vec<(&str, f64)> = Vec::new();

    let grid = TorusGrid::unit(256).unwrap();
    let eas = EasSolver::new(grid, KernelSpec::CONSTANT);
    let mut drift: f64 = 0.0;
    for u0 in [initial::symmetric, initial::asymmetric] {
        let rho0 = grid.sample(|x| 1.0 + 0.5 * (2.0 * PI * x).sin());
        let mut s = eas.state(rho0, grid.sample(u0), 0.0).unwrap();
        while s.t() < t_end {
            let dt = (0.4 * eas.stable_dt(&s)).min(t_end - s.t());
            let m = s.state.mass();
            s = eas.step(&s, dt).unwrap();
            drift = drift.max((s.state.mass() - m).abs());
        }
    }
    worst.push(("eas", drift));

    let pg = phase(64, 64, reference_xi_max());
    let sv = ProfileSolver::new(EasSolver::new(pg.x, KernelSpec::CONSTANT), pg).unwrap();
    let rho = vec![1.0; 64];
    let e0 = sv.eas.state(rho.clone(), pg.x.sample(initial::symmetric), 0.0).unwrap();
    let mut ps = sv.state(gaussian_profile(pg, &rho, 0.1).unwrap(), e0).unwrap();
    let mut drift: f64 = 0.0;
    while ps.t() < t_end {
        let dt = (0.4 * sv.stable_dt(&ps)).min(t_end - ps.t());
        let (m, l) = (ps.g.mass(), ps.leaked);
        ps = sv.step(&ps, dt).unwrap();
        drift = drift.max((ps.g.mass() + ps.leaked - m - l).abs());
    }
    worst.push(("profile", drift));

    let vs = VlasovSolver::new(pg, KernelSpec::CONSTANT, 0.1).unwrap();
    let mut s = vs
        .init(
            gaussian_profile(pg, &rho, 0.1).unwrap(),
            pg.x.sample(initial::symmetric),
        )
        .unwrap();
    let mut drift: f64 = 0.0;
    while s.t() < t_end {
        let dt = (0.4 * vs.stable_dt(&s).unwrap()).min(t_end - s.t());
        let (m, l) = (s.g.mass(), s.leaked);
        s = vs.step(&s, dt).unwrap();
        drift = drift.max((s.g.mass() + s.leaked - m - l).abs());
    }
    worst.push(("vlasov", drift));

    let eps = 0.2;
    let params = ModulationParams {
        epsilon: eps,
        sigma: sigma_for_epsilon(eps).unwrap(),
        delta: eps * eps,
        alpha: 1.0,
    };
    let fg = phase(64, 48, 6.0);
    let fp = FpSolver::new(fg, KernelSpec::CONSTANT, params).unwrap();
    let mut s = fp.init(&vec![1.0; 64], fg.x.sample(initial::symmetric)).unwrap();
    let mut drift: f64 = 0.0;
    while s.t() < t_end {
        let dt = (0.4 * fp.stable_dt(&s).unwrap()).min(t_end - s.t());
        let (m, l) = (s.g.mass(), s.leaked);
        s = fp.step(&s, dt).unwrap();
        drift = drift.max((s.g.mass() + s.leaked - m - l).abs());
    }
    worst.push(("fp", drift));

    let torus = TorusGrid::unit(64).unwrap();
    let n = 256;
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.618_033_988_75) % 1.0).collect();
    let v: Vec<f64> = (0..n).map(|i| (3.0 * i as f64).sin()).collect();
    let m: Vec<f64> = (0..n).map(|i| (1.0 + 0.5 * (i as f64).cos()) / n as f64).collect();
    let mut swarm = Swarm::new(torus, m, x, v).unwrap();
    let phi = KernelSpec::algebraic(1.0).unwrap();
    let p0 = swarm.momentum();
    for _ in 0..100 {
        swarm = step_cs(&swarm, &phi, 0.01);
    }
    let cs_rate = (swarm.momentum() - p0).abs() / swarm.t;

    let mut e_rate: f64 = 0.0;
    for u0 in [initial::symmetric, initial::asymmetric] {
        let s0 = eas.state(vec![1.0; 256], grid.sample(u0), 0.0).unwrap();
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let run = eas.run(s0, &times, TimeStep::Cfl(0.4)).unwrap();
        e_rate = e_rate.max(e_evolution_check(&run.snapshots).drift_rate);
    }

    let mass_ok = worst.iter().all(|(_, d)| *d <= 1e-12);
    let listed: Vec<String> = worst.iter().map(|(k, d)| format!("{k} {d:.1e}")).collect();
    Verdict::new(
        mass_ok && cs_rate <= 1e-12 && e_rate <= 1e-6,
        format!(
            "mass drift/step [{}] <= 1e-12; CS momentum drift/time {cs_rate:.1e} <= 1e-12; e drift/time {e_rate:.1e} <= 1e-6",
            listed.join(", ")
        ),
    )
}

fn analytic_fixed_points() -> Verdict {
    let pg = phase(4, 96, 8.0);
    let g = Profile::separable(pg, &[1.0, 2.0, 0.5, 1.5], |xi| {
        (-0.5 * xi * xi).exp() / (2.0 * PI).sqrt()
    })
    .unwrap();
    let ou = [1e-3, 1.0, 1e3]
        .iter()
        .map(|&tau| max_abs(&ou_implicit_substep(&g, tau).unwrap().data, &g.data))
        .fold(0.0, f64::max);

    let mut errors = Vec::new();
    for (nxi, dt) in [(64, 0.02), (128, 0.01), (256, 0.005)] {
        let pg = phase(8, nxi, 3.0);
        let sv = ProfileSolver::new(EasSolver::new(pg.x, KernelSpec::CONSTANT), pg).unwrap();
        let rho = vec![1.0; 8];
        let g0 = gaussian_profile(pg, &rho, 0.25).unwrap();
        let exact = second_xi_moment(&g0) * (-2.0f64).exp();
        let ps = sv.state(g0, sv.eas.state(rho, vec![0.0; 8], 0.0).unwrap()).unwrap();
        let run = sv.run(ps, &[1.0], TimeStep::Fixed(dt)).unwrap();
        errors.push((second_xi_moment(&run.snapshots[0].g) - exact).abs() / exact);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    let contraction_ok = ratios.iter().all(|r| (0.4..=0.6).contains(r));

    let torus = TorusGrid::unit(64).unwrap();
    let mut s = Swarm::new(torus, vec![0.5, 0.5], vec![0.1, 0.6], vec![1.0, -1.0]).unwrap();
    let mut two_body: f64 = 0.0;
    for k in 1..=1000 {
        s = step_cs(&s, &KernelSpec::CONSTANT, 1e-3);
        let decay = (-(k as f64) * 1e-3).exp();
        two_body = two_body.max((s.v[0] - decay).abs()).max((s.v[1] + decay).abs());
    }

    Verdict::new(
        ou <= 1e-13 && contraction_ok && two_body <= 1e-8,
        format!(
            "OU fixed point {ou:.1e} <= 1e-13; contraction moment errors {} halve (ratios {ratios:.3?} in [0.4, 0.6]); 2-body CS {two_body:.1e} <= 1e-8",
            sci(&errors)
        ),
    )
}

fn characteristic_identities() -> Verdict {
    let mut jac: f64 = 0.0;
    let mut all_positive = true;
    for u0 in [initial::symmetric, initial::asymmetric] {
        let (_, track) = eas_track(256, 1.0, 0.004, u0);
        for k in 0..10 {
            let traj =
                integrate_characteristics(&track, 0.05 + 0.1 * k as f64, &[0.51 - 0.1 * k as f64], 0.0, 1.0, 1e-3)
                    .unwrap();
            jac = jac.max(jacobian_identity_check(&traj));
            all_positive &= traj.jacobian_det.iter().all(|d| *d > 0.0);
        }
    }

    let g = TorusGrid::unit(8).unwrap();
    let damping = CoefficientTrack::stationary(g, &[0.0; 8], &[1.0; 8]).unwrap();
    let err = |dt: f64| {
        let traj = integrate_characteristics(&damping, 0.0, &[1.0], 0.0, 1.0, dt).unwrap();
        (traj.sigma.last().unwrap()[0] - (-1.0f64).exp()).abs()
    };
    let e = [err(0.1), err(0.05), err(0.025)];
    let ratios = [e[0] / e[1], e[1] / e[2]];
    Verdict::new(
        jac <= 1e-6 && all_positive && ratios.iter().all(|r| (14.0..=18.0).contains(r)),
        format!("Jacobian residual {jac:.1e} <= 1e-6 at dt 1e-3; RK4 ratios {ratios:.2?} in [14, 18]"),
    )
}

fn oracle_equivalence() -> Verdict {
    let t = 0.5;
    let variance = 0.1;
    let norm = (2.0 * PI * variance).sqrt();
    let g0 = move |_x: f64, xi: f64| (-0.5 * xi * xi / variance).exp() / norm;
    let mut dists = Vec::new();
    for (n, dt) in [(32, 0.02), (64, 0.01), (128, 0.005)] {
        let pg = phase(n, n, reference_xi_max());
        let sv = ProfileSolver::new(EasSolver::new(pg.x, KernelSpec::CONSTANT), pg).unwrap();
        let rho = vec![1.0; n];
        let e0 = sv.eas.state(rho.clone(), pg.x.sample(initial::symmetric), 0.0).unwrap();
        let ps = sv.state(gaussian_profile(pg, &rho, variance).unwrap(), e0).unwrap();
        let grid_solution = sv
            .run(ps, &[t], TimeStep::Fixed(dt))
            .unwrap()
            .snapshots
            .pop()
            .unwrap()
            .g;

        let (_, track) = eas_track(n, t, dt, initial::symmetric);
        let (pushed, _) = pushforward_reconstruct(&track, &g0, pg, t, dt / 4.0).unwrap();
        dists.push(grid_solution.l1_distance(&pushed).unwrap());
    }
    let ratios: Vec<f64> = dists.windows(2).map(|w| w[1] / w[0]).collect();
    Verdict::new(
        ratios.iter().all(|r| (0.4..=0.65).contains(r)),
        format!(
            "L1(grid, push-forward) {}, ratios {ratios:.3?} in [0.4, 0.65]",
            sci(&dists)
        ),
    )
}

fn unidirectional_squeezing() -> Verdict {
    let t_final = 6.0;
    let (snaps, track) = eas_track(256, t_final, 0.004, initial::symmetric);
    let min_rho_phi = snaps
        .iter()
        .flat_map(|s| s.rho_phi.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let bound = -0.5 * min_rho_phi;
    let (mut worst_r2, mut worst_rate) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..20 {
        let x0 = (k as f64 * 0.618_033_988_75) % 1.0;
        let traj = integrate_characteristics(&track, x0, &[0.3], 0.0, t_final, 1e-3).unwrap();
        let fit = squeeze_rate(&traj).unwrap();
        worst_r2 = worst_r2.min(fit.r_squared);
        worst_rate = worst_rate.max(fit.slope);
    }
    Verdict::new(
        worst_r2 >= 0.99 && worst_rate < 0.0 && worst_rate <= bound,
        format!("20 characteristics to t = {t_final}: min R^2 {worst_r2:.5} >= 0.99; slowest rate {worst_rate:.4} <= {bound:.4}"),
    )
}

fn symmetry_preservation() -> Verdict {
    let grid = TorusGrid::unit(256).unwrap();
    let sv = EasSolver::new(grid, KernelSpec::CONSTANT);
    let s0 = sv.state(vec![1.0; 256], grid.sample(initial::symmetric), 0.0).unwrap();
    let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
    let run = sv.run(s0, &times, TimeStep::Cfl(0.4)).unwrap();
    let worst = run
        .snapshots
        .iter()
        .map(|s| symmetry_residual(&s.state, 0.25))
        .fold(0.0, f64::max);
    let bound = 5.0 * grid.dx();
    Verdict::new(
        worst <= bound,
        format!("max residual about x* = 1/4 up to t = 1: {worst:.2e} <= {bound:.2e}"),
    )
}

fn sweep_config(model: SweepModel, eps_list: Vec<f64>, nx: usize, nxi: usize, xi_max: f64) -> RunConfig {
    let mut cfg = RunConfig::new(Scenario::Sweep, nx, nxi, xi_max, 0.5);
    cfg.sweep = Some(SweepSpec {
        model,
        eps_list,
        floor_correction: true,
    });
    cfg
}

fn vlasov_rates() -> Verdict {
    let cfg = sweep_config(
        SweepModel::Vlasov,
        vec![0.4, 0.2, 0.1, 0.05],
        128,
        128,
        reference_xi_max(),
    );
    let report = run_sweep(&cfg, None).unwrap();
    let monotone: Vec<bool> = report.columns.iter().map(|c| report.monotone(c).unwrap()).collect();
    let fit = report.slope("w1_rho").unwrap();
    Verdict::new(
        monotone.iter().all(|m| *m) && fit.slope >= 0.35,
        format!(
            "w1_rho {}; monotone {:?} for {:?}; floor-corrected w1_rho slope {:.3} >= 0.35",
            sci(&report.column("w1_rho").unwrap()),
            monotone,
            report.columns,
            fit.slope
        ),
    )
}

fn fp_rates() -> Verdict {
    let cfg = sweep_config(SweepModel::Fp, vec![0.2, 0.1, 0.05], 128, 64, 6.0);
    let report = run_sweep(&cfg, None).unwrap();
    let required = ["mod_energy", "w2sq_rho", "w1sq_mom", "rel_entropy"];
    let monotone: Vec<bool> = required.iter().map(|c| report.monotone(c).unwrap()).collect();
    let fit = report.slope("rel_entropy").unwrap();
    Verdict::new(
        monotone.iter().all(|m| *m) && fit.slope >= 0.7,
        format!(
            "H {}; monotone {monotone:?} for {required:?}; H slope {:.3} >= 0.7 ({})",
            sci(&report.column("rel_entropy").unwrap()),
            fit.slope,
            report.floor_note.as_deref().unwrap_or("no floor run")
        ),
    )
}

fn favre_filter() -> Verdict {
    let g = TorusGrid::unit(512).unwrap();
    let u = g.sample(|x| (2.0 * PI * x).sin());
    let rho = g.sample(|x| 1.0 + 0.5 * (2.0 * PI * x).cos());
    let tests: Vec<Vec<f64>> = (1..=4)
        .map(|k| g.sample(move |x| (2.0 * PI * k as f64 * x).cos() + 0.3 * (2.0 * PI * x).sin().powi(k)))
        .collect();
    let mut symmetry: f64 = 0.0;
    let mut psd = f64::INFINITY;
    let mut errs = Vec::new();
    for delta in [0.2, 0.1, 0.05] {
        let psi = Mollifier::build(delta, 1.0, &g).unwrap();
        let rep = favre_properties_check(&g, &u, &rho, &psi, &tests).unwrap();
        symmetry = symmetry.max(rep.symmetry_residual);
        psd = psd.min(rep.psd_residual);
        errs.push(rep.approximation_error);
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    Verdict::new(
        symmetry <= 1e-10 && psd >= -1e-10 && ratios.iter().all(|r| (0.4..=0.6).contains(r)),
        format!("symmetry {symmetry:.1e} <= 1e-10; PSD {psd:.2e} >= -1e-10; delta-halving ratios {ratios:.3?} in [0.4, 0.6]"),
    )
}

fn monte_carlo() -> Verdict {
    let n = 10_000;
    let grid = TorusGrid::unit(16).unwrap();
    let zeros = vec![0.0; 16];
    let field = MeanField::Grid {
        grid: &grid,
        urho_phi: &zeros,
        rho_phi: &zeros,
        u_delta: &zeros,
    };
    let sigma = 0.5;
    let p = LangevinParams {
        epsilon: 1.0,
        sigma,
        seed: 2024,
    };
    let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let mut s = Swarm::new(grid, vec![1.0 / n as f64; n], x, vec![0.0; n]).unwrap();
    for step in 0..10_000 {
        s = step_langevin(&s, &field, &p, 1e-3, step).unwrap();
    }
    let mean = s.v.iter().sum::<f64>() / n as f64;
    let var = s.v.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let rel = (var / sigma - 1.0).abs();
    let tol = 3.0 / (n as f64).sqrt();

    let grid = TorusGrid::unit(512).unwrap();
    let eas = EasSolver::new(grid, KernelSpec::CONSTANT);
    let rho0 = vec![1.0; 512];
    let u0 = grid.sample(initial::symmetric);
    let limit = eas
        .run(
            eas.state(rho0.clone(), u0.clone(), 0.0).unwrap(),
            &[0.5],
            TimeStep::Cfl(0.4),
        )
        .unwrap();
    let l = &limit.snapshots[0].state;
    let means: Vec<f64> = [256, 512, 1024, 2048, 4096]
        .iter()
        .map(|&n| {
            let total: f64 = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..8u64)
                    .map(|seed| {
                        let (rho0, u0) = (&rho0, &u0);
                        scope.spawn(move || {
                            let mut s = sample_swarm(&grid, rho0, u0, n, seed).unwrap();
                            for _ in 0..500 {
                                s = step_cs(&s, &KernelSpec::CONSTANT, 1e-3);
                            }
                            empirical_vs_grid(&s, &grid, &l.rho, &l.u).unwrap().0
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).sum()
            });
            total / 8.0
        })
        .collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    Verdict::new(
        rel <= tol && decreasing,
        format!(
            "OU variance {var:.4} vs sigma {sigma}: rel {rel:.4} <= {tol:.3}; mean w1_x over 8 seeds {} decreasing",
            sci(&means)
        ),
    )
}

fn main() -> std::process::ExitCode {
    let results: Vec<(Verdict, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = CRITERIA
            .iter()
            .map(|(_, check)| {
                scope.spawn(move || {
                    let start = Instant::now();
                    let v = check();
                    (v, start.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failed = Vec::new();
    for ((name, _), (v, secs)) in CRITERIA.iter().zip(&results) {
        println!(
            "{} {name} ({secs:.1} s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed.push(*name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", CRITERIA.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
