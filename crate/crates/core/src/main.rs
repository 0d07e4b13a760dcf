use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cf_handoff::engine::Scheme;
use cf_handoff::sim::{export, run_experiment, ExperimentConfig, Profile};
use cf_handoff::validate::{run_all, ValidationOptions};
use cf_handoff::Error;

/// Environment variable that overrides the default output directory.
const OUT_ENV: &str = "CF_HANDOFF_OUT_DIR";
const DEFAULT_OUT: &str = "results";

#[derive(Parser)]
#[command(
    name = "cf-handoff",
    version,
    about = "POMDP handoff simulator for user-centric cell-free networks"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; unspecified keys come from the selected profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base profile when no config file is given.
    #[arg(long, value_enum, default_value = "table1")]
    profile: ProfileArg,
    /// Dotted-key override, e.g. `--set engine.t_h=5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (else $CF_HANDOFF_OUT_DIR, else ./results).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ProfileArg {
    Table1,
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and export CSV/JSON results.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Scheme to run (repeatable; default from config).
        #[arg(long)]
        scheme: Vec<String>,
    },
    /// Run one experiment per value of a config parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Run the oracle suites and exit nonzero on any failure.
    Validate {
        /// Smaller sample sizes.
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Validation(usize),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::profile(match common.profile {
            ProfileArg::Table1 => Profile::Table1,
            ProfileArg::Desk => Profile::Desk,
        }),
    };
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{o}` is not KEY=VALUE")))?;
        cfg = cfg.with_override(k, v)?;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn run_once(cfg: &ExperimentConfig, dir: &Path) -> Result<(), Error> {
    let metrics = run_experiment(cfg)?;
    for s in cfg.engine.schemes.iter() {
        log::info!(
            "{}: {} handoffs over {} trials",
            s.name(),
            metrics.total_handoffs(*s),
            cfg.seeds.trials
        );
    }
    for path in export(&metrics, cfg, dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            common,
            seed,
            trials,
            scheme,
        } => {
            let mut cfg = load(&common)?;
            if let Some(s) = seed {
                cfg.seeds.master_seed = s;
            }
            if let Some(t) = trials {
                cfg.seeds.trials = t;
            }
            if !scheme.is_empty() {
                cfg.engine.schemes = scheme.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>, _>>()?;
            }
            cfg.validate()?;
            run_once(&cfg, &out_dir(&common))?;
        }
        Command::Sweep { common, param, values } => {
            let base = load(&common)?;
            let root = out_dir(&common);
            for v in &values {
                let cfg = base.with_override(&param, v)?;
                run_once(&cfg, &root.join(format!("{param}={v}")))?;
            }
        }
        Command::Validate { quick, seed } => {
            let mut opts = if quick {
                ValidationOptions::quick()
            } else {
                ValidationOptions::default()
            };
            if let Some(s) = seed {
                opts.seed = s;
            }
            let checks = run_all(&opts)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!(
                    "{} [{}] {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.suite,
                    c.name,
                    c.detail
                );
            }
            println!("{} checks, {failed} failed", checks.len());
            if failed > 0 {
                return Err(Failure::Validation(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(n)) => {
            eprintln!("error: {n} validation checks failed");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => 3,
                _ => 1,
            })
        }
    }
}
