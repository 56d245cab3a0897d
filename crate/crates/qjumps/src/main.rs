use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qjumps::cli::{self, Command, RunConfig, THREADS_ENV, VALIDATION_FAILED};
use qjumps::{Error, Result};

#[derive(Parser)]
#[command(name = "qjumps", version, about = "Motion-induced quantum jumps of a trapped three-level atom")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name (see `qjumps presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a physical parameter, e.g. `--set delta2=0.9`.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact and perturbative waiting-time distribution with bright/dark periods.
    WaitingTime(Common),
    /// Fluorescence spectrum of one transition, split into components.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        transition: Option<usize>,
    },
    /// Mean phonon number along a parameter scan.
    CoolingScan(Common),
    /// Monte Carlo photon record with bright/dark classification.
    Trajectory {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Invariant checks for a configuration.
    Validate(Common),
    /// List the bundled presets.
    Presets,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => RunConfig::from_toml(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => cli::preset(name)?,
        (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
    };
    for item in &common.overrides {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected NAME=VALUE, got {item:?}")))?;
        let value: f64 = value.trim().parse().map_err(|_| Error::Config(format!("not a number: {value:?}")))?;
        cfg.params = cfg.params.with_param(name.trim(), value).map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn execute(cmd: Cmd) -> Result<i32> {
    let (common, command, cfg) = match cmd {
        Cmd::Presets => {
            for (name, cfg) in cli::bundled_presets() {
                println!("{name}\t{}", cfg.hash());
            }
            return Ok(0);
        }
        Cmd::WaitingTime(c) => {
            let cfg = load(&c)?;
            (c, Command::WaitingTime, cfg)
        }
        Cmd::Spectrum { common, transition } => {
            let mut cfg = load(&common)?;
            if let Some(j) = transition {
                cfg.spectrum.transition = j;
            }
            (common, Command::Spectrum, cfg)
        }
        Cmd::CoolingScan(c) => {
            let cfg = load(&c)?;
            (c, Command::CoolingScan, cfg)
        }
        Cmd::Trajectory { common, seed, duration } => {
            let mut cfg = load(&common)?;
            if let Some(s) = seed {
                cfg.trajectory.seed = s;
            }
            if let Some(d) = duration {
                cfg.trajectory.duration = d;
            }
            (common, Command::Trajectory, cfg)
        }
        Cmd::Validate(c) => {
            let cfg = load(&c)?;
            (c, Command::Validate, cfg)
        }
    };
    let summary = cli::run(&cfg, command, &common.out)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
    Ok(if summary.passed() { 0 } else { VALIDATION_FAILED })
}

fn main() -> ExitCode {
    let args = Cli::parse();
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(args.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
