use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use slag_cli::checks::Tolerances;
use slag_cli::converge::convergence_study;
use slag_cli::emit::{self, Format};
use slag_cli::runner::run_scenario;
use slag_cli::scenario::ConfigError;
use slag_cli::{catalog, emit::ordered_checks};

#[derive(Parser)]
#[command(name = "slag", version, about = "Special Lagrangian moduli verification runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files (or built-in fixture names) and write reports.
    Run {
        #[arg(required = true)]
        files: Vec<String>,
        /// Scenarios run in parallel on this many threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Multiply every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        #[arg(long, value_delimiter = ',', default_values = ["json", "csv"])]
        format: Vec<FormatArg>,
    },
    /// Refinement study over mesh levels.
    Converge {
        file: String,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
        levels: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
    },
    /// Built-in fixtures.
    Fixtures {
        #[command(subcommand)]
        action: FixtureAction,
    },
}

#[derive(Subcommand)]
enum FixtureAction {
    List,
    Show { name: String },
}

fn tolerances(scale: f64) -> Result<Tolerances, ConfigError> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(ConfigError::Invalid {
            id: "--tol-scale".into(),
            message: format!("must be a finite non-negative number, got {scale}"),
        });
    }
    Ok(Tolerances::default().scaled(scale))
}

enum Failure {
    Config(ConfigError),
    Other(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Run {
            files,
            jobs,
            out,
            tol_scale,
            format,
        } => {
            let tol = tolerances(tol_scale)?;
            let scenarios = files.iter().map(|f| catalog::resolve(f)).collect::<Result<Vec<_>, _>>()?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .context("building the thread pool")?;
            let results = pool.install(|| {
                scenarios
                    .par_iter()
                    .map(|s| run_scenario(s, &tol))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            let (reports, timing): (Vec<_>, Vec<_>) = results.into_iter().unzip();
            let timing: Vec<_> = timing.into_iter().flatten().collect();
            let dir = out
                .or_else(|| scenarios.first().and_then(|s| s.out.clone()))
                .unwrap_or_else(|| PathBuf::from("out"));
            let formats: Vec<Format> = format
                .iter()
                .map(|f| match f {
                    FormatArg::Json => Format::Json,
                    FormatArg::Csv => Format::Csv,
                })
                .collect();
            emit::emit(&dir, &reports, &timing, &formats).with_context(|| format!("writing {}", dir.display()))?;
            for c in ordered_checks(&reports).iter().filter(|c| !c.pass) {
                println!("FAIL {}/{}: {:e} vs {:e} {}", c.scenario, c.id, c.value, c.tolerance, c.detail);
            }
            for r in &reports {
                let failed = r.checks.iter().filter(|c| !c.pass).count();
                println!("{}: {} checks, {} failed", r.scenario, r.checks.len(), failed);
            }
            Ok(reports.iter().all(|r| r.passed()))
        }
        Command::Converge {
            file,
            levels,
            out,
            tol_scale,
        } => {
            let tol = tolerances(tol_scale)?;
            let s = catalog::resolve(&file)?;
            let (report, _, timing) = convergence_study(&s, &levels, &tol)?;
            let dir = out.or_else(|| s.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
            emit::emit_convergence(&dir, &report, &timing).with_context(|| format!("writing {}", dir.display()))?;
            for series in &report.series {
                let pts: Vec<String> = series.points.iter().map(|(l, e)| format!("{l}:{e:.3e}")).collect();
                let order = series.order.map_or("-".to_string(), |p| format!("{p:.2}"));
                println!("{:<16} order {:>6}  {}", series.quantity, order, pts.join("  "));
            }
            for c in report.checks.iter().filter(|c| !c.pass) {
                println!("FAIL {}: {:e} vs {:e} {}", c.id, c.value, c.tolerance, c.detail);
            }
            Ok(report.passed())
        }
        Command::Fixtures { action } => {
            match action {
                FixtureAction::List => {
                    for name in catalog::names() {
                        let s = catalog::load(name)?;
                        println!("{name:<22} {}", s.description);
                    }
                }
                FixtureAction::Show { name } => print!("{}", catalog::source(&name)?),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
