use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use monokin::config::{load_config, RunConfig};
use monokin::{exit, report, run, sweep, Error};

#[derive(Debug, Parser)]
#[command(name = "monokin", version, about = "Monokinetic alignment laboratory")]
struct Cli {
    /// Worker threads for sweeps
    #[arg(long, global = true, env = "MONOKIN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario from a config file
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run an eps sweep described by a config with `scenario = sweep`
    Sweep {
        plan: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Merge the diagnostics under a directory into summary.csv
    Report { dir: PathBuf },
}

#[derive(Debug, clap::Args)]
struct Overrides {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated sample times
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
}

impl Overrides {
    fn apply(&self, mut cfg: RunConfig) -> Result<(RunConfig, PathBuf), Error> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(times) = &self.snapshot_times {
            cfg.snapshot_times = Some(times.clone());
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = Some(dir.clone());
        }
        cfg.validate()?;
        let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, dir))
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, overrides } => {
            let (cfg, dir) = overrides.apply(load_config(&config)?)?;
            let summary = run::execute(&cfg, &dir)?;
            println!("{} -> {}", summary.headline, summary.out_dir.display());
        }
        Command::Sweep { plan, overrides } => {
            let (cfg, dir) = overrides.apply(load_config(&plan)?)?;
            let report = sweep::run_sweep(&cfg, Some(&dir))?;
            let slopes: Vec<String> = report
                .slopes
                .iter()
                .map(|s| format!("{} {:.3}", s.quantity, s.slope))
                .collect();
            println!(
                "sweep: {} points -> {}; slopes: {}",
                report.rows.len(),
                dir.join(report.file_name()).display(),
                if slopes.is_empty() {
                    "none".into()
                } else {
                    slopes.join(", ")
                }
            );
        }
        Command::Report { dir } => {
            let (path, groups) = report::build_report(&dir)?;
            println!("report: {groups} groups -> {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(exit::VALIDATION as u8);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
