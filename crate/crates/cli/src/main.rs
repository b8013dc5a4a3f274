use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use resetsim_cli::commands;
use resetsim_cli::config::SystemConfig;
use resetsim_cli::{corpus, parse_list};
use resetsim_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "resetsim",
    about = "Analysis and simulation of linear reset control systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigSource {
    /// Path to a config JSON document.
    #[arg(long, conflicts_with = "example")]
    config: Option<PathBuf>,
    /// Name of a bundled example config.
    #[arg(long)]
    example: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<SystemConfig> {
        match (&self.config, &self.example) {
            (Some(path), None) => SystemConfig::from_path(path),
            (None, Some(name)) => {
                let text = corpus::get(name).ok_or_else(|| {
                    Error::Precondition(format!("unknown bundled config \"{name}\""))
                })?;
                SystemConfig::from_json(text)
            }
            _ => Err(Error::Precondition(
                "give exactly one of --config FILE or --example NAME".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide well-posedness of reset instants and print the certificate.
    Check {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Simulate and export trajectory and event CSVs.
    Simulate {
        #[command(flatten)]
        source: ConfigSource,
        /// Simulation horizon override.
        #[arg(long)]
        t_max: Option<f64>,
        /// Initial state override, comma separated.
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Hausdorff distance between the trajectories from two initial states.
    Hausdorff {
        #[command(flatten)]
        source: ConfigSource,
        /// Nominal initial state, comma separated (default: from config).
        #[arg(long)]
        x0: Option<String>,
        /// Perturbed initial state, comma separated.
        #[arg(long)]
        x0_star: String,
        #[arg(long, default_value_t = 10.0)]
        t_max: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Perturbation sweep of the initial condition.
    Probe {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        x0: Option<String>,
        /// Perturbation radii, comma separated.
        #[arg(long, default_value = "1e-2,1e-3,1e-4")]
        deltas: String,
        #[arg(long, default_value_t = 16)]
        n_dirs: usize,
        #[arg(long, default_value_t = 2.0)]
        t_max: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Polytope enclosure of the backward-reachable tangential set.
    Reach {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, default_value_t = 64)]
        normals: usize,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sensor-noise sensitivity sweep on a closed loop.
    Noise {
        #[command(flatten)]
        source: ConfigSource,
        /// Noise magnitudes, comma separated and strictly decreasing.
        #[arg(long, default_value = "0.2,0.1,0.05,0.025")]
        magnitudes: String,
        #[arg(long, default_value_t = 5.0)]
        t_max: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Manage the bundled example corpus.
    Examples {
        #[command(subcommand)]
        action: ExamplesAction,
    },
}

#[derive(Subcommand)]
enum ExamplesAction {
    /// List bundled configs.
    List,
    /// Write one bundled config to disk.
    Export {
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn parse_opt_list(text: &Option<String>) -> Result<Option<Vec<f64>>> {
    text.as_deref().map(parse_list).transpose()
}

fn run(cli: Cli) -> Result<i32> {
    let report = match cli.command {
        Command::Check { source } => commands::cmd_check(&source.load()?)?,
        Command::Simulate {
            source,
            t_max,
            x0,
            out,
        } => {
            let x0 = parse_opt_list(&x0)?;
            commands::cmd_simulate(&source.load()?, t_max, x0.as_deref(), &out)?
        }
        Command::Hausdorff {
            source,
            x0,
            x0_star,
            t_max,
            out,
        } => {
            let x0 = parse_opt_list(&x0)?;
            let xs = parse_list(&x0_star)?;
            commands::cmd_hausdorff(&source.load()?, x0.as_deref(), &xs, t_max, &out)?
        }
        Command::Probe {
            source,
            x0,
            deltas,
            n_dirs,
            t_max,
            out,
        } => {
            let x0 = parse_opt_list(&x0)?;
            let deltas = parse_list(&deltas)?;
            commands::cmd_probe(&source.load()?, x0.as_deref(), &deltas, n_dirs, t_max, &out)?
        }
        Command::Reach {
            source,
            normals,
            horizon,
            out,
        } => commands::cmd_reach(&source.load()?, normals, horizon, &out)?,
        Command::Noise {
            source,
            magnitudes,
            t_max,
            out,
        } => {
            let mags = parse_list(&magnitudes)?;
            commands::cmd_noise(&source.load()?, &mags, t_max, &out)?
        }
        Command::Examples { action } => match action {
            ExamplesAction::List => commands::cmd_examples_list()?,
            ExamplesAction::Export { name, out } => commands::cmd_examples_export(&name, &out)?,
        },
    };
    report.print();
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
