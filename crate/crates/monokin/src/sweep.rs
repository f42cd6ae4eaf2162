//! Epsilon sweeps with log-log rate fits.

use std::fmt::Write as _;
use std::path::Path;

use monokin_core::fit::log_log_fit;
use monokin_core::fokker_planck::{fp_functionals, FpSolver};
use monokin_core::profile::gaussian_profile;
use monokin_core::vlasov::{vlasov_distances, VlasovSolver};
use monokin_core::{DiagnosticsRecord, Error as CoreError, Quantity};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{RunConfig, SweepModel, SweepSpec};
use crate::io::{self, write_atomic, write_json};
use crate::run::{
    eas_reference, initial_density, kernel_name, phase_grid, profile_reference, RunManifest, DIAGNOSTICS, MANIFEST,
};
use crate::{Context, Error, Result};

/// The floor run sits this factor below the smallest swept `eps`.
pub const FLOOR_FACTOR: f64 = 8.0;
/// Fitted values keep at least this fraction above the floor.
pub const FLOOR_CAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub sigma: f64,
    pub delta: f64,
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub quantity: &'static str,
    pub slope: f64,
    /// 95% interval; needs at least three points.
    pub ci: Option<(f64, f64)>,
    pub r_squared: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub model: SweepModel,
    pub columns: &'static [&'static str],
    /// In the order of the (decreasing) eps list.
    pub rows: Vec<SweepRow>,
    /// Values at `min eps / FLOOR_FACTOR`, when that run was possible.
    pub floor_row: Option<SweepRow>,
    pub floor_note: Option<String>,
    /// Empty for a single point.
    pub slopes: Vec<SlopeFit>,
}

impl SweepReport {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    /// Strictly decreasing along the eps list.
    pub fn monotone(&self, name: &str) -> Option<bool> {
        self.column(name).map(|v| v.windows(2).all(|w| w[1] < w[0]))
    }

    pub fn slope(&self, name: &str) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.quantity == name)
    }

    pub fn file_name(&self) -> &'static str {
        match self.model {
            SweepModel::Vlasov => "vlasov_sweep.csv",
            SweepModel::Fp => "fp_sweep.csv",
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,sigma,delta,t");
        for c in self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{}", r.eps, r.sigma, r.delta, r.t);
            for v in &r.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out.push_str("# slope,quantity,value,ci_low,ci_high,r_squared,floor\n");
        for c in self.columns {
            match self.slope(c) {
                Some(s) => {
                    let (lo, hi) =
                        s.ci.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
                    let _ = writeln!(out, "# slope,{c},{},{lo},{hi},{},{}", s.slope, s.r_squared, s.floor);
                }
                None => {
                    let _ = writeln!(out, "# slope,{c},,,,,");
                }
            }
        }
        if let Some(n) = &self.floor_note {
            let _ = writeln!(out, "# floor,{n}");
        }
        out
    }
}

const VLASOV_COLUMNS: &[&str] = &["w1_rho", "w1_mom_u", "w1_mom_m", "w1_g"];
const FP_COLUMNS: &[&str] = &["mod_energy", "w2sq_rho", "w1sq_mom", "rel_entropy", "fisher"];

struct Point {
    row: SweepRow,
    state: PointState,
    diagnostics: DiagnosticsRecord,
    steps: usize,
}

enum PointState {
    Vlasov(Box<monokin_core::vlasov::VlasovState>),
    Fp(Box<monokin_core::fokker_planck::FpState>),
}

/// Log-log fit after removing `floor` (capped at `FLOOR_CAP` of the smallest value).
pub fn floor_corrected_fit(name: &'static str, eps: &[f64], values: &[f64], floor: f64) -> Option<SlopeFit> {
    if eps.len() < 2 {
        return None;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = floor.max(0.0).min(FLOOR_CAP * min);
    let shifted: Vec<f64> = values.iter().map(|v| v - floor).collect();
    let fit = log_log_fit(eps, &shifted).ok()?;
    let ci = (fit.n > 2).then(|| {
        let q = StudentsT::new(0.0, 1.0, (fit.n - 2) as f64)
            .map(|t| t.inverse_cdf(0.975))
            .unwrap_or(f64::NAN);
        (fit.slope - q * fit.slope_stderr, fit.slope + q * fit.slope_stderr)
    });
    Some(SlopeFit {
        quantity: name,
        slope: fit.slope,
        ci,
        r_squared: fit.r_squared,
        floor,
    })
}

fn run_point(cfg: &RunConfig, spec: &SweepSpec, eps: f64, limit: &Limit) -> Result<Point> {
    let pg = phase_grid(cfg)?;
    let params = cfg.params_for(eps)?;
    let rho0 = initial_density(&pg.x);
    let u0 = cfg.u0.sample(&pg.x);
    let t = cfg.t_final;
    match (spec.model, limit) {
        (SweepModel::Vlasov, Limit::Profile(l)) => {
            let g0 = gaussian_profile(pg, &rho0, cfg.sigma_g0).context("initial profile")?;
            let sv = VlasovSolver::new(pg, cfg.kernel, eps).context("vlasov solver")?;
            let s0 = sv.init(g0, u0).context("vlasov initial state")?;
            let run = sv.run(s0, &[t], cfg.step).context("vlasov run")?;
            let s = run.snapshots.into_iter().next_back().ok_or(Error::Solver {
                context: "vlasov run",
                source: CoreError::NonFinite("empty run"),
            })?;
            let d = vlasov_distances(&s, &l.eas.state.rho, &l.eas.state.u, &l.g).context("distances")?;
            let mut diagnostics = run
                .diagnostics
                .last()
                .cloned()
                .unwrap_or_else(|| DiagnosticsRecord::new(t));
            diagnostics.set(Quantity::W1Rho, d.w1_rho).context("diagnostics")?;
            diagnostics
                .set(Quantity::W1Momentum, d.w1_mom_u)
                .context("diagnostics")?;
            diagnostics.set(Quantity::W1Profile, d.w1_g).context("diagnostics")?;
            Ok(Point {
                row: SweepRow {
                    eps,
                    sigma: 0.0,
                    delta: params.delta,
                    t,
                    values: vec![d.w1_rho, d.w1_mom_u, d.w1_mom_m, d.w1_g],
                },
                state: PointState::Vlasov(Box::new(s)),
                diagnostics,
                steps: run.steps,
            })
        }
        (SweepModel::Fp, Limit::Eas(l)) => {
            let sv = FpSolver::new(pg, cfg.kernel, params).context("fp solver")?;
            let s0 = sv.init(&rho0, u0).context("fp initial state")?;
            let run = sv.run(s0, &[t], cfg.step).context("fp run")?;
            let s = run.snapshots.into_iter().next_back().ok_or(Error::Solver {
                context: "fp run",
                source: CoreError::NonFinite("empty run"),
            })?;
            let f = fp_functionals(&s, &l.state.rho, &l.state.u).context("functionals")?;
            let mut diagnostics = run
                .diagnostics
                .last()
                .cloned()
                .unwrap_or_else(|| DiagnosticsRecord::new(t));
            diagnostics
                .set(Quantity::ModulatedEnergy, f.mod_energy)
                .context("diagnostics")?;
            diagnostics
                .set(Quantity::W1Momentum, f.w1sq_mom.sqrt())
                .context("diagnostics")?;
            Ok(Point {
                row: SweepRow {
                    eps,
                    sigma: params.sigma,
                    delta: params.delta,
                    t,
                    values: vec![f.mod_energy, f.w2sq_rho, f.w1sq_mom, f.rel_entropy, f.fisher],
                },
                state: PointState::Fp(Box::new(s)),
                diagnostics,
                steps: run.steps,
            })
        }
        _ => unreachable!("limit kind follows the sweep model"),
    }
}

enum Limit {
    Profile(Box<monokin_core::profile::ProfileState>),
    Eas(Box<monokin_core::eas::EasState>),
}

/// Runs every point of the sweep in parallel; writes per-point outputs under
/// `out_dir/eps_{eps}` when `out_dir` is given.
pub fn run_sweep(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<SweepReport> {
    cfg.validate()?;
    let spec = cfg.sweep.clone().ok_or_else(|| crate::ConfigError::Invalid {
        field: "sweep_model",
        reason: "required for a sweep".into(),
    })?;
    let t = cfg.t_final;
    let limit = match spec.model {
        SweepModel::Vlasov => {
            let run = profile_reference(cfg, &[t])?;
            Limit::Profile(Box::new(run.snapshots.into_iter().next_back().ok_or(
                Error::Solver {
                    context: "limit run",
                    source: CoreError::NonFinite("empty run"),
                },
            )?))
        }
        SweepModel::Fp => {
            let run = eas_reference(cfg, &[t])?;
            Limit::Eas(Box::new(run.snapshots.into_iter().next_back().ok_or(
                Error::Solver {
                    context: "limit run",
                    source: CoreError::NonFinite("empty run"),
                },
            )?))
        }
    };

    let min_eps = spec.eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    let floor_eps = min_eps / FLOOR_FACTOR;
    let mut all_eps = spec.eps_list.clone();
    let want_floor = spec.floor_correction && spec.eps_list.len() > 1;
    if want_floor {
        all_eps.push(floor_eps);
    }
    let results: Vec<(f64, Result<Point>)> = all_eps
        .par_iter()
        .map(|&eps| (eps, run_point(cfg, &spec, eps, &limit)))
        .collect();

    let mut points = Vec::with_capacity(spec.eps_list.len());
    let mut floor_point = None;
    let mut floor_note = None;
    for (k, (eps, res)) in results.into_iter().enumerate() {
        let is_floor = want_floor && k == spec.eps_list.len();
        match res {
            Ok(p) if is_floor => floor_point = Some(p),
            Ok(p) => points.push(p),
            Err(Error::Solver {
                source: source @ (CoreError::UnderResolved { .. } | CoreError::XiBoxTooSmall { .. }),
                ..
            }) if is_floor => {
                floor_note = Some(format!("unavailable at eps = {eps}: {source}; slopes use raw values"));
            }
            Err(e) => {
                return Err(Error::SweepPoint {
                    eps,
                    source: Box::new(e),
                })
            }
        }
    }
    if let Some(p) = &floor_point {
        floor_note = Some(format!("estimated at eps = {}", p.row.eps));
    }

    let columns = match spec.model {
        SweepModel::Vlasov => VLASOV_COLUMNS,
        SweepModel::Fp => FP_COLUMNS,
    };
    let eps: Vec<f64> = points.iter().map(|p| p.row.eps).collect();
    let slopes = columns
        .iter()
        .enumerate()
        .filter_map(|(k, name)| {
            let values: Vec<f64> = points.iter().map(|p| p.row.values[k]).collect();
            let floor = floor_point.as_ref().map_or(0.0, |p| p.row.values[k]);
            floor_corrected_fit(name, &eps, &values, floor)
        })
        .collect();

    let report = SweepReport {
        model: spec.model,
        columns,
        rows: points.iter().map(|p| p.row.clone()).collect(),
        floor_row: floor_point.as_ref().map(|p| p.row.clone()),
        floor_note,
        slopes,
    };

    if let Some(dir) = out_dir {
        write_atomic(&dir.join(report.file_name()), report.to_csv().as_bytes())?;
        for p in &points {
            write_point(cfg, &spec, dir, p)?;
        }
    }
    Ok(report)
}

fn write_point(cfg: &RunConfig, spec: &SweepSpec, dir: &Path, p: &Point) -> Result<()> {
    let sub = dir.join(format!("eps_{}", p.row.eps));
    let (prefix, g, scenario) = match &p.state {
        PointState::Vlasov(s) => ("gveps_", &s.g, "vlasov"),
        PointState::Fp(s) => ("gfp_", &s.g, "fp"),
    };
    let name = io::write_profile(&sub, prefix, g)?;
    write_atomic(
        &sub.join(DIAGNOSTICS),
        io::diagnostics_csv(std::slice::from_ref(&p.diagnostics)).as_bytes(),
    )?;
    let manifest = RunManifest {
        scenario: scenario.into(),
        epsilon: Some(p.row.eps),
        sigma: (spec.model == SweepModel::Fp).then_some(p.row.sigma),
        delta: (spec.model == SweepModel::Fp).then_some(p.row.delta),
        alpha: cfg.alpha,
        nx: cfg.nx,
        nxi: cfg.nxi,
        xi_max: cfg.xi_max,
        t_final: cfg.t_final,
        kernel: kernel_name(&cfg.kernel),
        u0: cfg.u0.name(),
        seed: cfg.seed,
        snapshot_times: vec![p.row.t],
        steps: p.steps,
        files: vec![name, DIAGNOSTICS.into()],
        notes: vec!["sweep member".into()],
    };
    write_json(&sub.join(MANIFEST), &manifest)?;
    Ok(())
}
