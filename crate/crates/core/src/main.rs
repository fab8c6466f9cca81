use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use distddp::parallel::Executor;
use distddp::scenario::builtin;
use distddp::scenario::config::ScenarioConfig;
use distddp::scenario::{bench, replay, run};
use distddp::Error;

#[derive(Parser)]
#[command(
    name = "distddp",
    version,
    about = "Distributed DDP for multi-agent trajectory optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write results.
    Run {
        /// TOML file or built-in name (see `list`).
        scenario: String,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// `key=value` overrides, e.g. `solver=nd` or `md.iterations=50`.
        overrides: Vec<String>,
    },
    /// Re-execute a finished run under position noise.
    Replay {
        /// Output directory of an earlier `run`.
        run_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        /// Restrict to one mode; both are reported by default.
        #[arg(long, value_enum)]
        feedback: Option<Mode>,
    },
    /// Time the centralized and distributed solvers on growing formations.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        sizes: Vec<usize>,
        /// Neighborhood size, self included.
        #[arg(long, default_value_t = 2)]
        neighborhood: usize,
        /// Distributed iterations per run.
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        /// DDP iterations granted to the centralized solve.
        #[arg(long, default_value_t = 20)]
        central_iterations: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Check a scenario without solving it.
    Validate {
        scenario: String,
        overrides: Vec<String>,
    },
    /// Print a built-in scenario as TOML.
    Show { name: String },
    /// List built-in scenarios.
    List,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    On,
    Off,
}

fn load(scenario: &str, overrides: &[String]) -> Result<ScenarioConfig, Error> {
    let base = match builtin::by_name(scenario) {
        Some(cfg) => cfg,
        None => ScenarioConfig::load(&PathBuf::from(scenario))?,
    };
    base.with_overrides(overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            overrides,
        } => load(&scenario, &overrides).and_then(|cfg| {
            let exec = Executor::from_env().map_err(Error::Other)?;
            let outcome = run::run(&cfg, &exec)?;
            run::write_outputs(&outcome, &out)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
            Ok(())
        }),
        Command::Replay {
            run_dir,
            seeds,
            noise,
            feedback,
        } => run::load_run(&run_dir).and_then(|saved| {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::Validation(distddp::error::ValidationError(vec![
                    "noise must be finite and nonnegative".into(),
                ])));
            }
            let json = match feedback {
                None => serde_json::to_string_pretty(&replay::compare(
                    &saved.problem,
                    &saved.trajectories,
                    &saved.laws,
                    noise,
                    0..seeds,
                ))?,
                Some(mode) => {
                    let stats: Vec<_> = (0..seeds)
                        .map(|seed| {
                            replay::replay(
                                &saved.problem,
                                &saved.trajectories,
                                &saved.laws,
                                noise,
                                seed,
                                mode == Mode::On,
                            )
                            .1
                        })
                        .collect();
                    serde_json::to_string_pretty(&stats)?
                }
            };
            println!("{json}");
            Ok(())
        }),
        Command::Bench {
            sizes,
            neighborhood,
            iterations,
            central_iterations,
            repeats,
        } => Executor::from_env().map_err(Error::Other).and_then(|exec| {
            let report = bench::formation_sweep(
                &sizes,
                neighborhood,
                iterations,
                central_iterations,
                repeats,
                &exec,
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }),
        Command::Validate {
            scenario,
            overrides,
        } => load(&scenario, &overrides).and_then(|cfg| {
            cfg.problem()?;
            println!("{}: ok ({} agents)", cfg.name, cfg.agents.len());
            Ok(())
        }),
        Command::Show { name } => match builtin::by_name(&name) {
            Some(cfg) => {
                print!("{}", cfg.to_toml());
                Ok(())
            }
            None => Err(Error::Other(format!("unknown scenario {name:?}"))),
        },
        Command::List => {
            for n in builtin::NAMES {
                println!("{n}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
