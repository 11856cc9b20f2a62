//! Batch experiment driver: simulations, constructions, surgery
//! verifications, and estimator suites, driven by flags or a config file.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
//! 3 inconclusive verification.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_count, parse_window, CountList, F64List, FileConfig, Resolved};

#[derive(Parser, Debug)]
#[command(name = "dwere", version, about = "Deterministic walks in excited random environments")]
struct Cli {
    /// Config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for the Monte Carlo pool (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct CommonFlags {
    /// Maximal jump size L.
    #[arg(long = "L")]
    max_jump: Option<u32>,

    /// Cookies per site M.
    #[arg(long = "M")]
    stack_height: Option<u32>,

    /// Comma-separated jump weights for -L..L (default: uniform).
    #[arg(long)]
    weights: Option<F64List>,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Trial count; scientific notation accepted (1e6).
    #[arg(long, value_parser = parse_count)]
    trials: Option<u64>,

    /// Per-trial step budget for loop-certified events.
    #[arg(long, value_parser = parse_count)]
    max_steps: Option<u64>,

    /// Site window lo:hi (default: derived from the horizon).
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window: Option<(i64, i64)>,

    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one walk and write its trajectory and outcome record.
    Simulate {
        #[command(flatten)]
        common: CommonFlags,
        /// Use the built-in four-site demonstration environment.
        #[arg(long)]
        example: bool,
        /// Overlay a named construction: k-returns | trap | blocker | ballistic.
        #[arg(long)]
        construct: Option<String>,
        /// Exact number of origin occupations (k-returns).
        #[arg(long, value_parser = parse_count)]
        k: Option<u64>,
        /// Left end of the trapping interval.
        #[arg(long, allow_hyphen_values = true)]
        start: Option<i64>,
        /// Chain length of the ballistic highway.
        #[arg(long, value_parser = parse_count)]
        chain: Option<u64>,
        /// Blocker site.
        #[arg(long, allow_hyphen_values = true)]
        site: Option<i64>,
    },
    /// Monte Carlo estimator suites.
    Estimate {
        #[command(subcommand)]
        which: EstimateCommand,
    },
    /// Backtrack-elimination runs and subenvironment verification.
    Surgery {
        #[command(flatten)]
        common: CommonFlags,
        /// Deviation speed lambda.
        #[arg(long)]
        lambda: Option<f64>,
        /// Horizon n.
        #[arg(long, value_parser = parse_count)]
        n: Option<u64>,
        /// Batch size: planted instances to eliminate.
        #[arg(long, value_parser = parse_count)]
        seeds: Option<u64>,
        /// Iteration budget per instance.
        #[arg(long, value_parser = parse_count)]
        budget: Option<u64>,
        /// Verify the subenvironment relation between two environment files.
        #[arg(long, num_args = 2, value_names = ["BEFORE", "AFTER"])]
        verify_only: Option<Vec<PathBuf>>,
        /// Threshold for --verify-only.
        #[arg(long, allow_hyphen_values = true)]
        ell: Option<i64>,
        /// Pivot for --verify-only.
        #[arg(long = "m", allow_hyphen_values = true)]
        pivot: Option<i64>,
        /// Apply one excision a,b,ta,tb to the environment in --env.
        #[arg(long, allow_hyphen_values = true)]
        raise: Option<String>,
        /// Environment file for --raise.
        #[arg(long)]
        env: Option<PathBuf>,
    },
    /// Write a named construction as a patch file.
    Construct {
        #[command(flatten)]
        common: CommonFlags,
        /// k-returns | trap | blocker | ballistic.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, value_parser = parse_count)]
        k: Option<u64>,
        #[arg(long, allow_hyphen_values = true)]
        start: Option<i64>,
        #[arg(long, value_parser = parse_count)]
        chain: Option<u64>,
        #[arg(long, allow_hyphen_values = true)]
        site: Option<i64>,
    },
}

#[derive(Subcommand, Debug)]
enum EstimateCommand {
    /// Rate table over a lambda and horizon grid.
    Rate {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        lambda: Option<F64List>,
        #[arg(long)]
        n: Option<CountList>,
        /// Optional power-scaling exponent for the threshold.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Origin-occupation histogram against the sandwich bounds.
    Returns {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long, value_parser = parse_count)]
        kmax: Option<u64>,
    },
    /// Annulus reach decay with a fitted per-grade factor.
    Annulus {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long, value_parser = parse_count)]
        kmax: Option<u64>,
        /// Fit range lo:hi over the grades.
        #[arg(long, value_parser = parse_window)]
        fit: Option<(i64, i64)>,
    },
    /// Composition inequality for the reach-without-backtracking events.
    Subadd {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        lambda: Option<f64>,
        /// The two horizons n,m.
        #[arg(long)]
        pair: Option<CountList>,
    },
    /// Midpoint concavity of the empirical rate.
    Concavity {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        lambda: Option<F64List>,
        #[arg(long)]
        n: Option<CountList>,
    },
    /// Gap between the deadline event and its no-backtracking restriction.
    Mainbound {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        n: Option<CountList>,
    },
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes instead of panicking in
    // println.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.downcast_ref::<ConfigError>().is_some() {
                1
            } else {
                2
            };
            ExitCode::from(code)
        }
    }
}

/// Marker for errors that should exit with the usage/config code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(|e| ConfigError(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    let file_common = file.common.clone().unwrap_or_default();

    let resolve = |flags: &CommonFlags| -> anyhow::Result<Resolved> {
        let window = match &flags.window {
            Some(w) => Some(*w),
            None => match &file_common.window {
                Some(s) => Some(parse_window(s).map_err(|e| ConfigError(format!("{e:#}")))?),
                None => None,
            },
        };
        let resolved = Resolved {
            max_jump: flags.max_jump.or(file_common.max_jump).unwrap_or(2),
            stack_height: flags.stack_height.or(file_common.stack_height).unwrap_or(2),
            weights: flags
                .weights
                .clone()
                .map(|w| w.0)
                .or_else(|| file_common.weights.clone()),
            seed: flags.seed.or(file_common.seed.map(|c| c.0)).unwrap_or(0),
            trials: flags
                .trials
                .or(file_common.trials.map(|c| c.0))
                .unwrap_or(100_000),
            max_steps: flags
                .max_steps
                .or(file_common.max_steps.map(|c| c.0))
                .unwrap_or(1_000_000),
            window,
            out: flags.out.clone().or_else(|| file_common.out.clone()),
            workers: cli
                .workers
                .map(|w| w as u64)
                .or(file_common.workers.map(|c| c.0)),
        };
        // Validate the distribution up front, before any work starts.
        resolved
            .distribution()
            .map_err(|e| ConfigError(e.to_string()))?;
        Ok(resolved)
    };

    // Configure the worker pool once.
    let pool_workers = cli.workers.or(file_common.workers.map(|c| c.0 as usize));
    if let Some(w) = pool_workers {
        if w == 0 {
            return Err(ConfigError("workers must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .ok();
    }

    match cli.command {
        Command::Simulate {
            common,
            example,
            construct,
            k,
            start,
            chain,
            site,
        } => {
            let resolved = resolve(&common)?;
            let section = file.simulate.clone().unwrap_or_default();
            commands::simulate(
                &resolved,
                commands::SimulateArgs {
                    example: example || section.example.unwrap_or(false),
                    construct: construct.or(section.construct),
                    k: k.or(section.k.map(|c| c.0)),
                    start: start.or(section.start),
                    chain: chain.or(section.chain.map(|c| c.0)),
                    site: site.or(section.site),
                },
            )
        }
        Command::Estimate { which } => {
            let section = file.estimate.clone().unwrap_or_default();
            commands::estimate(which, section, &resolve)
        }
        Command::Surgery {
            common,
            lambda,
            n,
            seeds,
            budget,
            verify_only,
            ell,
            pivot,
            raise,
            env,
        } => {
            let resolved = resolve(&common)?;
            let section = file.surgery.clone().unwrap_or_default();
            commands::surgery(
                &resolved,
                commands::SurgeryArgs {
                    lambda: lambda.or(section.lambda),
                    n: n.or(section.n.map(|c| c.0)),
                    seeds: seeds.or(section.seeds.map(|c| c.0)),
                    budget: budget.or(section.budget.map(|c| c.0)),
                    verify_only,
                    ell: ell.or(section.ell),
                    pivot: pivot.or(section.pivot),
                    raise,
                    env,
                },
            )
        }
        Command::Construct {
            common,
            kind,
            k,
            start,
            chain,
            site,
        } => {
            let resolved = resolve(&common)?;
            let section = file.construct.clone().unwrap_or_default();
            commands::construct(
                &resolved,
                commands::ConstructArgs {
                    kind: kind.or(section.kind),
                    k: k.or(section.k.map(|c| c.0)),
                    start: start.or(section.start),
                    chain: chain.or(section.chain.map(|c| c.0)),
                    site: site.or(section.site),
                },
            )
        }
    }
}
