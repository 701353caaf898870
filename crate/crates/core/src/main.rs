use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rmsds::config::{parse_config_as, ExperimentKind, RunConfig};
use rmsds::{runner, Error};

#[derive(Parser, Debug)]
#[command(name = "rmsds", version, about = "Random-matrix stochastic dynamical systems: simulation and universality checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Integrate one sampled system and export its trajectory.
    Simulate,
    /// Paired two-ensemble comparison of observables.
    Universality,
    /// Replica fluctuations of observables over the time grid.
    Concentration,
    /// Exact aging ratios of the zero-temperature spherical flow.
    Aging,
    /// Symbolic series against Monte Carlo on a small system.
    TaylorCheck,
    /// Term-count bounds and moment agreement over generator words.
    MomentsCheck,
    /// Langevin dynamics with thresholds; paired comparison.
    Hopfield,
    /// Rayleigh-quotient ascent against the top eigenvalue.
    Rayleigh,
    /// Run whatever `experiment` the configuration names.
    Run,
}

impl Command {
    fn kind(self) -> Option<ExperimentKind> {
        Some(match self {
            Command::Simulate => ExperimentKind::Simulate,
            Command::Universality => ExperimentKind::Universality,
            Command::Concentration => ExperimentKind::Concentration,
            Command::Aging => ExperimentKind::Aging,
            Command::TaylorCheck => ExperimentKind::TaylorCheck,
            Command::MomentsCheck => ExperimentKind::MomentsCheck,
            Command::Hopfield => ExperimentKind::Hopfield,
            Command::Rayleigh => ExperimentKind::Rayleigh,
            Command::Run => return None,
        })
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let kind = cli.command.kind();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_config_as(&text, path.parent(), kind)?
        }
        None => match kind {
            Some(k) => RunConfig::defaults(k),
            None => return Err(Error::InvalidArgument("`run` needs --config".into())),
        },
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn report(err: &Error, status: u8, out: Option<&PathBuf>) -> ExitCode {
    let record = serde_json::json!({ "status": status, "kind": err.kind(), "message": err.to_string() });
    eprintln!("{record}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = rmsds::io::write_atomic(&dir.join("error.json"), format!("{record}\n").as_bytes());
        }
    }
    ExitCode::from(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return report(&e, 2, cli.out.as_ref()),
    };
    match runner::run(&cfg, cli.threads) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(&e, 1, Some(&cfg.out)),
    }
}
