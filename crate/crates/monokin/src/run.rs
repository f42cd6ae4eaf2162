//! Single-scenario execution.

use std::path::{Path, PathBuf};

use monokin_core::characteristics::{
    integrate_characteristics, jacobian_identity_check, squeeze_rate, CoefficientTrack,
};
use monokin_core::eas::{EasRun, EasSolver};
use monokin_core::fokker_planck::{fp_functionals, FpSolver};
use monokin_core::kernels::{KernelKind, KernelSpec, Mollifier};
use monokin_core::particles::{
    empirical_vs_grid, particle_rng, sample_swarm, step_cs, step_langevin, LangevinParams, MeanField, Swarm,
};
use monokin_core::profile::{gaussian_profile, ProfileRun, ProfileSolver};
use monokin_core::schedule::{clip_step, TimeStep};
use monokin_core::vlasov::{vlasov_distances, VlasovSolver};
use monokin_core::{DiagnosticsRecord, PhaseGrid, Quantity, TorusGrid, XiGrid};
use rand_distr::{Distribution, Standard};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Scenario};
use crate::io::{self, snapshot_name, write_atomic, write_json};
use crate::{Context, Result};

pub const MANIFEST: &str = "run.json";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
/// Spacing of the coefficient snapshots that drive characteristics.
pub const TRACK_SPACING: f64 = 0.004;

/// Written next to every run's outputs; the report step keys on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub alpha: f64,
    pub nx: usize,
    pub nxi: usize,
    pub xi_max: f64,
    pub t_final: f64,
    pub kernel: String,
    pub u0: String,
    pub seed: u64,
    pub snapshot_times: Vec<f64>,
    pub steps: usize,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub steps: usize,
    pub files: Vec<String>,
    pub headline: String,
}

pub fn kernel_name(k: &KernelSpec) -> String {
    match k.kind {
        KernelKind::Constant => "const".into(),
        KernelKind::Algebraic { beta } => format!("algebraic(beta={beta})"),
    }
}

pub fn x_grid(cfg: &RunConfig) -> Result<TorusGrid> {
    TorusGrid::unit(cfg.nx).context("grid")
}

pub fn phase_grid(cfg: &RunConfig) -> Result<PhaseGrid> {
    Ok(PhaseGrid::new(
        x_grid(cfg)?,
        XiGrid::new(cfg.nxi, cfg.xi_max).context("grid")?,
    ))
}

/// Uniform initial density.
pub fn initial_density(grid: &TorusGrid) -> Vec<f64> {
    vec![1.0; grid.len()]
}

pub fn eas_reference(cfg: &RunConfig, times: &[f64]) -> Result<EasRun> {
    let grid = x_grid(cfg)?;
    let sv = EasSolver::new(grid, cfg.kernel);
    let s0 = sv
        .state(initial_density(&grid), cfg.u0.sample(&grid), 0.0)
        .context("eas initial state")?;
    sv.run(s0, times, cfg.step).context("eas run")
}

pub fn profile_reference(cfg: &RunConfig, times: &[f64]) -> Result<ProfileRun> {
    let pg = phase_grid(cfg)?;
    let eas = EasSolver::new(pg.x, cfg.kernel);
    let rho0 = initial_density(&pg.x);
    let e0 = eas
        .state(rho0.clone(), cfg.u0.sample(&pg.x), 0.0)
        .context("eas initial state")?;
    let g0 = gaussian_profile(pg, &rho0, cfg.sigma_g0).context("initial profile")?;
    let sv = ProfileSolver::new(eas, pg).context("profile solver")?;
    let s0 = sv.state(g0, e0).context("profile initial state")?;
    sv.run(s0, times, cfg.step).context("profile run")
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn text(&mut self, name: String, body: &str) -> Result<()> {
        write_atomic(&self.dir.join(&name), body.as_bytes())?;
        self.files.push(name);
        Ok(())
    }

    fn profile(&mut self, prefix: &str, g: &monokin_core::Profile) -> Result<()> {
        let name = io::write_profile(&self.dir, prefix, g)?;
        self.files.push(name);
        Ok(())
    }
}

/// Runs the scenario of `cfg` (not `sweep`) and writes its outputs to `out_dir`.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let times = cfg.snapshot_times();
    let mut out = Outputs::new(out_dir);
    let mut notes = Vec::new();
    let (steps, records, headline) = match cfg.scenario {
        Scenario::Eas => run_eas(cfg, &times, &mut out)?,
        Scenario::Profile => run_profile(cfg, &times, &mut out)?,
        Scenario::Vlasov => run_vlasov(cfg, &times, &mut out, &mut notes)?,
        Scenario::Fp => run_fp(cfg, &times, &mut out)?,
        Scenario::Characteristics => run_characteristics(cfg, &mut out)?,
        Scenario::Particles => run_particles(cfg, &times, &mut out)?,
        Scenario::Sweep => {
            return Err(crate::ConfigError::Invalid {
                field: "scenario",
                reason: "sweeps run through the sweep command".into(),
            }
            .into())
        }
    };
    out.text(DIAGNOSTICS.into(), &io::diagnostics_csv(&records))?;

    let params = cfg.params()?;
    let kinetic = matches!(cfg.scenario, Scenario::Vlasov | Scenario::Fp);
    let manifest = RunManifest {
        scenario: cfg.scenario.name().into(),
        epsilon: kinetic.then_some(params.epsilon),
        sigma: (cfg.scenario == Scenario::Fp).then_some(params.sigma),
        delta: (cfg.scenario == Scenario::Fp).then_some(params.delta),
        alpha: cfg.alpha,
        nx: cfg.nx,
        nxi: cfg.nxi,
        xi_max: cfg.xi_max,
        t_final: cfg.t_final,
        kernel: kernel_name(&cfg.kernel),
        u0: cfg.u0.name(),
        seed: cfg.seed,
        snapshot_times: times,
        steps,
        files: out.files.clone(),
        notes,
    };
    write_json(&out_dir.join(MANIFEST), &manifest)?;
    Ok(RunSummary {
        scenario: cfg.scenario,
        out_dir: out_dir.to_path_buf(),
        steps,
        files: out.files,
        headline,
    })
}

type Outcome = (usize, Vec<DiagnosticsRecord>, String);

fn run_eas(cfg: &RunConfig, times: &[f64], out: &mut Outputs) -> Result<Outcome> {
    let run = eas_reference(cfg, times)?;
    for s in &run.snapshots {
        out.text(snapshot_name("eas_", s.t(), "csv"), &io::eas_csv(s))?;
    }
    let last = run.diagnostics.last();
    let headline = format!(
        "eas: {} steps, mass {:.12}, e_min {:.6}",
        run.steps,
        last.and_then(|d| d.get(Quantity::Mass)).unwrap_or(f64::NAN),
        last.and_then(|d| d.get(Quantity::EMin)).unwrap_or(f64::NAN)
    );
    Ok((run.steps, run.diagnostics, headline))
}

fn run_profile(cfg: &RunConfig, times: &[f64], out: &mut Outputs) -> Result<Outcome> {
    let run = profile_reference(cfg, times)?;
    for s in &run.snapshots {
        out.profile("g_", &s.g)?;
        out.text(snapshot_name("eas_", s.t(), "csv"), &io::eas_csv(&s.eas))?;
    }
    let headline = format!(
        "profile: {} steps, final mass {:.12}",
        run.steps,
        run.snapshots.last().map_or(f64::NAN, |s| s.g.mass())
    );
    Ok((run.steps, run.diagnostics, headline))
}

fn run_vlasov(cfg: &RunConfig, times: &[f64], out: &mut Outputs, notes: &mut Vec<String>) -> Result<Outcome> {
    let pg = phase_grid(cfg)?;
    let limit = profile_reference(cfg, times)?;
    let rho0 = initial_density(&pg.x);
    let g0 = gaussian_profile(pg, &rho0, cfg.sigma_g0).context("initial profile")?;
    let sv = VlasovSolver::new(pg, cfg.kernel, cfg.epsilon).context("vlasov solver")?;
    let s0 = sv.init(g0, cfg.u0.sample(&pg.x)).context("vlasov initial state")?;
    let run = sv.run(s0, times, cfg.step).context("vlasov run")?;
    notes.push("initial Gaussian profile truncated to the xi box".into());
    let mut records = run.diagnostics.clone();
    let mut last = None;
    for ((s, l), rec) in run.snapshots.iter().zip(&limit.snapshots).zip(&mut records) {
        out.profile("gveps_", &s.g)?;
        let d = vlasov_distances(s, &l.eas.state.rho, &l.eas.state.u, &l.g).context("distances")?;
        rec.set(Quantity::W1Rho, d.w1_rho).context("diagnostics")?;
        rec.set(Quantity::W1Momentum, d.w1_mom_u).context("diagnostics")?;
        rec.set(Quantity::W1Profile, d.w1_g).context("diagnostics")?;
        last = Some(d);
    }
    let headline = match last {
        Some(d) => format!(
            "vlasov eps={}: {} steps, w1_rho {:.3e}, w1_g {:.3e}",
            cfg.epsilon, run.steps, d.w1_rho, d.w1_g
        ),
        None => format!("vlasov eps={}: {} steps", cfg.epsilon, run.steps),
    };
    Ok((run.steps, records, headline))
}

fn run_fp(cfg: &RunConfig, times: &[f64], out: &mut Outputs) -> Result<Outcome> {
    let pg = phase_grid(cfg)?;
    let limit = eas_reference(cfg, times)?;
    let params = cfg.params()?;
    let sv = FpSolver::new(pg, cfg.kernel, params).context("fp solver")?;
    let s0 = sv
        .init(&initial_density(&pg.x), cfg.u0.sample(&pg.x))
        .context("fp initial state")?;
    let run = sv.run(s0, times, cfg.step).context("fp run")?;
    let mut records = run.diagnostics.clone();
    let mut last = None;
    for ((s, l), rec) in run.snapshots.iter().zip(&limit.snapshots).zip(&mut records) {
        out.profile("gfp_", &s.g)?;
        let f = fp_functionals(s, &l.state.rho, &l.state.u).context("functionals")?;
        rec.set(Quantity::ModulatedEnergy, f.mod_energy)
            .context("diagnostics")?;
        rec.set(Quantity::W1Momentum, f.w1sq_mom.sqrt())
            .context("diagnostics")?;
        last = Some(f);
    }
    let headline = match last {
        Some(f) => format!(
            "fp eps={} sigma={:.6}: {} steps, mod_energy {:.3e}, rel_entropy {:.3e}",
            params.epsilon, params.sigma, run.steps, f.mod_energy, f.rel_entropy
        ),
        None => format!("fp eps={}: {} steps", params.epsilon, run.steps),
    };
    Ok((run.steps, records, headline))
}

fn run_characteristics(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome> {
    let n = (cfg.t_final / TRACK_SPACING).ceil() as usize;
    let track_times: Vec<f64> = (0..=n).map(|k| (k as f64 * TRACK_SPACING).min(cfg.t_final)).collect();
    let eas = eas_reference(cfg, &track_times)?;
    let track = CoefficientTrack::from_eas(&eas.snapshots).context("coefficient track")?;
    let sigma0 = cfg.sigma_g0.sqrt();
    let mut table = String::from("k,x0,sigma0,rate,r_squared,jacobian_residual\n");
    let mut worst = 0.0f64;
    for k in 0..cfg.characteristics {
        let x0: f64 = Standard.sample(&mut particle_rng(cfg.seed, k, 0));
        let traj = integrate_characteristics(&track, x0, &[sigma0], 0.0, cfg.t_final, cfg.char_dt)
            .context("characteristic")?;
        let fit = squeeze_rate(&traj).context("squeeze fit")?;
        let residual = jacobian_identity_check(&traj);
        worst = worst.max(residual);
        table.push_str(&format!(
            "{k},{x0},{sigma0},{},{},{residual}\n",
            fit.slope, fit.r_squared
        ));
        out.text(format!("traj_{k:03}.csv"), &io::trajectory_csv(&traj))?;
    }
    out.text("characteristics.csv".into(), &table)?;
    let headline = format!(
        "characteristics: {} trajectories, max Jacobian residual {worst:.3e}",
        cfg.characteristics
    );
    let records: Vec<DiagnosticsRecord> = eas
        .diagnostics
        .into_iter()
        .filter(|d| cfg.snapshot_times().iter().any(|t| (t - d.t).abs() < 1e-9))
        .collect();
    Ok((eas.steps, records, headline))
}

/// Step size for the particle integrators.
fn particle_dt(cfg: &RunConfig, s: &Swarm) -> f64 {
    match cfg.step {
        TimeStep::Fixed(dt) => dt,
        TimeStep::Cfl(c) => {
            let vmax = s.v.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let phi_max = cfg.kernel.value(&s.torus, 0.0);
            let relax = s.total_mass() * phi_max + cfg.sigma.map_or(0.0, |_| 1.0 / cfg.epsilon);
            let a = if vmax > 0.0 { s.torus.dx() / vmax } else { f64::INFINITY };
            c * a.min(1.0 / relax.max(1e-12))
        }
    }
}

fn run_particles(cfg: &RunConfig, times: &[f64], out: &mut Outputs) -> Result<Outcome> {
    let grid = x_grid(cfg)?;
    let reference = eas_reference(cfg, times)?;
    let mut s = sample_swarm(
        &grid,
        &initial_density(&grid),
        &cfg.u0.sample(&grid),
        cfg.particles,
        cfg.seed,
    )
    .context("sampling")?;
    let langevin = match cfg.sigma {
        Some(sigma) if sigma > 0.0 => {
            let params = cfg.params()?;
            Some((
                Mollifier::build(params.delta, params.alpha, &grid).context("mollifier")?,
                LangevinParams {
                    epsilon: cfg.epsilon,
                    sigma,
                    seed: cfg.seed,
                },
            ))
        }
        _ => None,
    };
    let mut steps = 0usize;
    let mut records = Vec::with_capacity(times.len());
    let mut last = (f64::NAN, f64::NAN);
    for (&target, r) in times.iter().zip(&reference.snapshots) {
        while s.t < target - 1e-12 {
            let (dt, hit) = clip_step(s.t, target, particle_dt(cfg, &s));
            s = match &langevin {
                None => step_cs(&s, &cfg.kernel, dt),
                Some((psi, p)) => {
                    let field = MeanField::Empirical {
                        phi: cfg.kernel,
                        psi,
                        grid: &grid,
                    };
                    step_langevin(&s, &field, p, dt, steps as u64).context("langevin step")?
                }
            };
            if hit {
                s.t = target;
            }
            steps += 1;
        }
        let (w1_x, w1_v) = empirical_vs_grid(&s, &grid, &r.state.rho, &r.state.u).context("empirical distance")?;
        let mut d = DiagnosticsRecord::new(s.t);
        d.set(Quantity::Mass, s.total_mass()).context("diagnostics")?;
        d.set(Quantity::Momentum, s.momentum()).context("diagnostics")?;
        let energy = 0.5 * s.mass.iter().zip(&s.v).map(|(m, v)| m * v * v).sum::<f64>();
        d.set(Quantity::Energy, energy).context("diagnostics")?;
        d.set(Quantity::W1Rho, w1_x).context("diagnostics")?;
        d.set(Quantity::W1Momentum, w1_v).context("diagnostics")?;
        records.push(d);
        out.text(snapshot_name("swarm_", s.t, "csv"), &io::swarm_csv(&s, cfg.seed))?;
        last = (w1_x, w1_v);
    }
    let headline = format!(
        "particles: N = {}, {} steps, w1_x {:.3e}, w1_mom {:.3e}",
        cfg.particles, steps, last.0, last.1
    );
    Ok((steps, records, headline))
}
