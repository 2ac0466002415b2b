//! `myosim`: experiment driver. Exit status is 0 when every criterion of the run
//! passes, 1 on failed criteria or runtime errors, 2 on configuration errors.

mod commands;
mod config;
mod output;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use myosim::report::{sha256_hex, Report};

use crate::config::{ExperimentConfig, Loaded};
use crate::output::Artifacts;

const DEFAULT_OUT: &str = "myosim-out";
const THREADS_ENV: &str = "MYOSIM_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] myosim::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "myosim", version, about = "Myopic non-intersecting diffusions and random walks")]
struct Cli {
    /// Experiment config (sectioned `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to MYOSIM_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Format of path and table dumps. Reports are always JSON.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the potential against every modelling assumption.
    ValidatePotential,
    /// Euler-Maruyama trajectory and its box process.
    SimulateDiffusion,
    /// Myopic random walks (Algorithm A).
    SimulateMrw,
    /// Myopic non-intersecting diffusions (Algorithm B, or C with --eps).
    SimulateMbm {
        /// Segment granularity; switches to Algorithm C. Overrides `myopic.eps`.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Exit times over a list of kappa values: log-rate slope and Exp(1) fit.
    Metastability,
    /// Exact mRW rates across a list of foresights, between the two limits.
    Interpolate,
    /// Rescaled boxed myopic diffusions against myopic random walks.
    TheoremMain,
    /// Exact survival probabilities and generator rates.
    Rates,
    /// Built-in suite of identities with known answers.
    Selftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ValidatePotential => "validate-potential",
            Command::SimulateDiffusion => "simulate-diffusion",
            Command::SimulateMrw => "simulate-mrw",
            Command::SimulateMbm { .. } => "simulate-mbm",
            Command::Metastability => "metastability",
            Command::Interpolate => "interpolate",
            Command::TheoremMain => "theorem-main",
            Command::Rates => "rates",
            Command::Selftest => "selftest",
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("{THREADS_ENV} = {v:?} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

/// Hash of the config bytes plus any flag that changes the experiment besides the seed.
fn config_hash(raw: &str, command: &Command) -> String {
    let mut text = format!("command={}\n", command.name());
    if let Command::SimulateMbm { eps: Some(e) } = command {
        text.push_str(&format!("eps={e:?}\n"));
    }
    text.push_str(raw);
    sha256_hex(text.as_bytes())
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    init_threads(cli.threads)?;
    let loaded = match (&cli.config, &cli.command) {
        (Some(path), _) => config::load(path)?,
        (None, Command::Selftest) => Loaded {
            config: ExperimentConfig::default(),
            raw: String::new(),
            dir: PathBuf::new(),
        },
        (None, _) => return Err(CliError::Config("--config is required".into())),
    };
    let cfg = &loaded.config;
    let seed = match (cli.seed, cfg.seed, &cli.command) {
        (Some(s), _, _) | (None, Some(s), _) => s,
        (None, None, Command::Selftest) => selftest::SELFTEST_SEED,
        (None, None, _) => return Err(CliError::Config("no seed: set `seed` in the config or pass --seed".into())),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| loaded.dir.join(o)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut art = Artifacts::open(&out, cli.format, config_hash(&loaded.raw, &cli.command), seed, cfg.name.clone())?;
    art.log(&format!(
        "start {} seed={seed} config={}",
        cli.command.name(),
        cli.config.as_deref().map(Path::display).map(|d| d.to_string()).unwrap_or_default()
    ));

    let base = loaded.dir.as_path();
    let result = match &cli.command {
        Command::ValidatePotential => commands::validate_potential(cfg, base, &mut art),
        Command::SimulateDiffusion => commands::simulate_diffusion(cfg, base, &mut art),
        Command::SimulateMrw => commands::simulate_mrw(cfg, &mut art),
        Command::SimulateMbm { eps } => commands::simulate_mbm(cfg, base, *eps, &mut art),
        Command::Metastability => commands::metastability(cfg, base, &mut art),
        Command::Interpolate => commands::interpolate(cfg, &mut art),
        Command::TheoremMain => commands::theorem_main(cfg, base, &mut art),
        Command::Rates => commands::rates(cfg, &mut art),
        Command::Selftest => {
            let mut report = art.new_report("selftest");
            selftest::run(&mut report, seed);
            art.write_report(&report, "selftest.json")?;
            Ok(report)
        }
    };
    match &result {
        Ok(r) => {
            let failed = r.criteria.iter().filter(|c| !c.passed).count();
            art.log(&format!("done: {} criteria, {failed} failed", r.criteria.len()));
        }
        Err(e) => art.log(&format!("aborted: {e}")),
    }
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for c in &report.criteria {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("myosim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
