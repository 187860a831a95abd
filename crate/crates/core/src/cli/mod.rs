//! Command-line front end: `run`, `oracle` and `validate`.

pub mod config;
pub mod run;
pub mod validate;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
pub use config::RunConfig;
pub use run::Overrides;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "FIDELITY_QMC_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATE_FAILED: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "fidelity-qmc",
    version,
    about = "Loschmidt echo and relative purity of dissipative free fermions by determinant QMC"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonFlags {
    /// Master seed, overrides sampler.master_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overrides output.directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads, overrides execution.max_parallel_chains.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo time series for a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Exact and Trotterized series for a small lattice (V <= 4).
    Oracle {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Runs the built-in consistency checks.
    Validate,
}

impl CommonFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            jobs: self.jobs,
        }
    }
}

fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::SizeCap(_) => EXIT_INVALID_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn cmd_run(path: &std::path::Path, flags: &CommonFlags) -> i32 {
    let cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID_CONFIG;
        }
    };
    let ov = flags.overrides();
    let dir = run::resolve_out_dir(&cfg, &ov, env_out_dir());
    let outcome = match run::execute(&cfg, &ov) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    if let Err(e) = run::write_run(&dir, &cfg, &ov, &outcome) {
        eprintln!("error: writing results to {}: {e}", dir.display());
        return EXIT_NUMERICAL;
    }
    if outcome.aborted() {
        for m in &outcome.numerical_errors {
            eprintln!("numerical abort: {m}");
        }
        for g in &outcome.series.gaps {
            eprintln!("missing time point n_t={}: {}", g.n_t, g.reason);
        }
        eprintln!("partial results written to {}", dir.display());
        return EXIT_NUMERICAL;
    }
    println!("wrote {}", dir.join("series.csv").display());
    EXIT_OK
}

fn cmd_oracle(path: &std::path::Path, flags: &CommonFlags) -> i32 {
    let cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID_CONFIG;
        }
    };
    let dir = run::resolve_out_dir(&cfg, &flags.overrides(), env_out_dir());
    match run::oracle_series(&cfg).and_then(|s| run::write_oracle(&dir, &cfg, &s)) {
        Ok(()) => {
            println!("wrote {}", dir.join("oracle_exact.csv").display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn cmd_validate() -> i32 {
    let checks = validate::run_checks();
    print!("{}", validate::format_table(&checks));
    let failed: Vec<_> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        EXIT_OK
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        EXIT_VALIDATE_FAILED
    }
}

/// Parses `args` and runs the chosen subcommand, returning the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID_CONFIG
            } else {
                EXIT_OK
            };
        }
    };
    match &cli.command {
        Command::Run { config, flags } => cmd_run(config, flags),
        Command::Oracle { config, flags } => cmd_oracle(config, flags),
        Command::Validate => cmd_validate(),
    }
}
