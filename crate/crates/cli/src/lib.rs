//! `hetnet` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use hetnet_core::evaluation::{InterfererSet, UserAntenna};
use hetnet_core::scenario::{read_scenario, write_scenario};
use hetnet_core::{
    audit, baseline, compute_cov, empirical_cdf, interference_rates, optimize, run_monte_carlo, Config,
    InterferenceMode, Scenario, Solution,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;

/// Environment variable that sets the worker count.
pub const WORKERS_ENV: &str = "HETNET_WORKERS";

/// Version of the solution and rate files.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Core(#[from] hetnet_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) | CliError::Core(hetnet_core::Error::Solver(_)) => EXIT_SOLVER,
            _ => EXIT_INVALID,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "hetnet", version, about = "Aerial base station placement, association and bandwidth planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration; missing keys take the reference defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for scenario generation and the solver (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output file, or output directory for `montecarlo`.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Worker threads for Monte Carlo runs (default: all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,

    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a scenario and write it as JSON lines.
    Generate,
    /// Run the alternating optimisation.
    Solve {
        /// Scenario file; drawn from the config when absent.
        #[arg(long, value_name = "FILE")]
        scenario: Option<PathBuf>,
    },
    /// Run the k-means baseline.
    Baseline {
        #[arg(long, value_name = "FILE")]
        scenario: Option<PathBuf>,
    },
    /// Run the configured sweep; writes runs.csv, summary.json and manifest.json.
    Montecarlo,
    /// Achieved rates of the optimised solution under interference.
    Interference {
        #[arg(long, value_name = "FILE")]
        scenario: Option<PathBuf>,
        /// Interference model; taken from `experiment.interference` when absent.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Linear side-lobe gain for `abs-sidelobe`.
        #[arg(long)]
        g_side: Option<f64>,
        /// User antenna for `user-to-user`.
        #[arg(long, value_enum, default_value = "omni")]
        antenna: AntennaArg,
        /// Sum over every other-tier user instead of the nearest one.
        #[arg(long)]
        all_interferers: bool,
    },
    /// Print the Voronoi-area CoV of a scenario's users.
    Cov {
        #[arg(value_name = "SCENARIO")]
        scenario: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    AbsSidelobe,
    UserToUser,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AntennaArg {
    Omni,
    Directional,
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the config file bytes, or of the empty string for defaults.
    pub config_sha256: String,
    pub scenario_path: Option<PathBuf>,
    pub scenario_sha256: Option<String>,
    pub seed: u64,
    pub timestamp: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<Vec<u8>, CliError> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(hetnet_core::Error::from)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema_version: u32,
    pub method: String,
    pub seed: u64,
    pub audit_violations: Vec<hetnet_core::Violation>,
    pub solution: Solution,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses and validates a config file; `None` yields the defaults.
pub fn load_config(path: Option<&Path>) -> Result<(Config, String), CliError> {
    let Some(path) = path else {
        return Ok((Config::default(), sha256_hex(b"")));
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let config = parse_config(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok((config, sha256_hex(text.as_bytes())))
}

pub fn parse_config(text: &str) -> Result<Config, CliError> {
    let config: Config = toml::from_str(text).map_err(|e| CliError::Invalid(e.to_string().trim_end().to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn config_to_toml(config: &Config) -> Result<String, CliError> {
    toml::to_string(config).map_err(|e| CliError::Invalid(format!("cannot serialise config: {e}")))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(&dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

struct Context {
    config: Config,
    config_path: Option<PathBuf>,
    config_sha256: String,
    seed: u64,
    workers: Option<usize>,
}

impl Context {
    fn manifest(&self, subcommand: &str, scenario: Option<&(PathBuf, String)>, outputs: Vec<PathBuf>) -> RunManifest {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config_path: self.config_path.clone(),
            config_sha256: self.config_sha256.clone(),
            scenario_path: scenario.map(|s| s.0.clone()),
            scenario_sha256: scenario.map(|s| s.1.clone()),
            seed: self.seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs,
        }
    }

    /// The scenario from `path`, or a fresh draw from the config.
    fn scenario(&self, path: Option<&Path>) -> Result<(Scenario, Option<(PathBuf, String)>), CliError> {
        match path {
            Some(p) => {
                let bytes = fs::read(p).map_err(io_err(p))?;
                let s = read_scenario(BufReader::new(bytes.as_slice()))?;
                Ok((s, Some((p.to_path_buf(), sha256_hex(&bytes)))))
            }
            None => {
                let s = self.config.scenario.generate(&mut ChaCha8Rng::seed_from_u64(self.seed))?;
                Ok((s.with_seed(self.seed), None))
            }
        }
    }
}

fn write_with_manifest(
    ctx: &Context,
    subcommand: &str,
    out: &Path,
    bytes: &[u8],
    scenario: Option<&(PathBuf, String)>,
) -> Result<(), CliError> {
    write_atomic(out, bytes)?;
    let manifest = ctx.manifest(subcommand, scenario, vec![out.to_path_buf()]);
    write_atomic(&manifest_path(out), &manifest.to_json()?)
}

fn solution_bytes(method: &str, seed: u64, solution: Solution, scenario: &Scenario, config: &Config) -> Result<Vec<u8>, CliError> {
    let report = audit(&solution, scenario, &config.channel);
    if !report.is_clean() {
        log::warn!("solution fails the constraint audit:\n{report}");
    }
    let file = SolutionFile {
        schema_version: OUTPUT_SCHEMA_VERSION,
        method: method.to_string(),
        seed,
        audit_violations: report.violations,
        solution,
    };
    let mut bytes = serde_json::to_vec_pretty(&file).map_err(hetnet_core::Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let (config, config_sha256) = load_config(cli.config.as_deref())?;
    if cli.workers == Some(0) {
        return Err(CliError::Invalid("--workers must be at least 1".into()));
    }
    let seed = cli.seed.unwrap_or(config.solver.seed);
    let ctx = Context { config, config_path: cli.config.clone(), config_sha256, seed, workers: cli.workers };
    let out = cli.out;

    match cli.command {
        Command::Generate => {
            let (scenario, _) = ctx.scenario(None)?;
            let mut bytes = Vec::new();
            write_scenario(&scenario, &mut bytes)?;
            let out = out.unwrap_or_else(|| PathBuf::from("scenario.jsonl"));
            write_with_manifest(&ctx, "generate", &out, &bytes, None)?;
            println!("wrote {} users to {}", scenario.user_count(), out.display());
        }
        Command::Solve { scenario } => {
            let (scenario, source) = ctx.scenario(scenario.as_deref())?;
            let solver = hetnet_core::SolverConfig { seed: ctx.seed, ..ctx.config.solver.clone() };
            let solution = optimize(&scenario, &ctx.config.channel, &solver)?;
            println!(
                "total {:.6e} W, ABS {:.6e} W, {} ABS users, {} iterations{}",
                solution.total_power,
                solution.abs_total_power,
                solution.abs_users(),
                solution.iterations,
                if solution.converged { "" } else { " (not converged)" }
            );
            let bytes = solution_bytes("optimize", ctx.seed, solution, &scenario, &ctx.config)?;
            let out = out.unwrap_or_else(|| PathBuf::from("solution.json"));
            write_with_manifest(&ctx, "solve", &out, &bytes, source.as_ref())?;
        }
        Command::Baseline { scenario } => {
            let (scenario, source) = ctx.scenario(scenario.as_deref())?;
            let solver = hetnet_core::SolverConfig { seed: ctx.seed, ..ctx.config.solver.clone() };
            let solution = baseline(&scenario, &ctx.config.channel, &solver)?;
            println!(
                "total {:.6e} W, ABS {:.6e} W, {} ABS users",
                solution.total_power,
                solution.abs_total_power,
                solution.abs_users()
            );
            let bytes = solution_bytes("baseline", ctx.seed, solution, &scenario, &ctx.config)?;
            let out = out.unwrap_or_else(|| PathBuf::from("baseline.json"));
            write_with_manifest(&ctx, "baseline", &out, &bytes, source.as_ref())?;
        }
        Command::Montecarlo => {
            let mut experiment = ctx.config.experiment.clone();
            if let Some(s) = cli.seed {
                experiment.base_seed = s;
            }
            let c = &ctx.config;
            let table = run_monte_carlo(&c.scenario, &c.channel, &c.solver, &experiment, ctx.workers)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("montecarlo"));
            let mut csv_bytes = Vec::new();
            table.write_csv(&mut csv_bytes)?;
            let mut json = Vec::new();
            table.write_json(&mut json)?;
            let runs = dir.join("runs.csv");
            let summary = dir.join("summary.json");
            write_atomic(&runs, &csv_bytes)?;
            write_atomic(&summary, &json)?;
            let ctx = Context { seed: experiment.base_seed, ..ctx };
            let manifest = ctx.manifest("montecarlo", None, vec![runs, summary]);
            write_atomic(&dir.join("manifest.json"), &manifest.to_json()?)?;
            for cell in &table.cells {
                println!(
                    "cell {}: {} runs ({} failed), mean total {:.4e} W, mean ABS {:.4e} W, mean ABS users {:.2}",
                    cell.cell.index,
                    cell.runs,
                    cell.failed_runs,
                    cell.optimized.total_power.mean,
                    cell.optimized.abs_power.mean,
                    cell.optimized.abs_users.mean
                );
            }
        }
        Command::Interference { scenario, mode, g_side, antenna, all_interferers } => {
            let mode = match mode {
                Some(ModeArg::AbsSidelobe) => InterferenceMode::AbsSidelobe {
                    g_side: g_side.unwrap_or(ctx.config.channel.side_lobe_gain),
                },
                Some(ModeArg::UserToUser) => InterferenceMode::UserToUser {
                    antenna: match antenna {
                        AntennaArg::Omni => UserAntenna::Omni,
                        AntennaArg::Directional => UserAntenna::Directional,
                    },
                    interferers: if all_interferers { InterfererSet::All } else { InterfererSet::Nearest },
                },
                None => ctx.config.experiment.interference.ok_or_else(|| {
                    CliError::Invalid("no interference mode: pass --mode or set experiment.interference".into())
                })?,
            };
            if let InterferenceMode::AbsSidelobe { g_side } = mode {
                if !(g_side >= 0.0 && g_side.is_finite()) {
                    return Err(CliError::Invalid(format!("--g-side must be non-negative, got {g_side}")));
                }
            }
            let (scenario, source) = ctx.scenario(scenario.as_deref())?;
            let solver = hetnet_core::SolverConfig { seed: ctx.seed, ..ctx.config.solver.clone() };
            let solution = optimize(&scenario, &ctx.config.channel, &solver)?;
            let rates = interference_rates(&solution, &scenario, &ctx.config.channel, mode)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["user", "serving", "target_bps", "achieved_bps"]).map_err(hetnet_core::Error::from)?;
            for (i, r) in rates.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    solution.serving[i].to_string(),
                    scenario.users[i].rate_demand.to_string(),
                    r.to_string(),
                ])
                .map_err(hetnet_core::Error::from)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))?;
            let out = out.unwrap_or_else(|| PathBuf::from("rates.csv"));
            write_with_manifest(&ctx, "interference", &out, &bytes, source.as_ref())?;
            let cdf = empirical_cdf(&rates)?;
            let median = cdf.iter().find(|(_, f)| *f >= 0.5).map(|p| p.0).unwrap_or(f64::NAN);
            let below = rates
                .iter()
                .zip(&scenario.users)
                .filter(|(r, u)| **r < u.rate_demand * (1.0 - 1e-9))
                .count();
            println!("median achieved rate {median:.6e} bit/s; {below} of {} users below target", rates.len());
        }
        Command::Cov { scenario } => {
            let bytes = fs::read(&scenario).map_err(io_err(&scenario))?;
            let s = read_scenario(BufReader::new(bytes.as_slice()))?;
            let cov = compute_cov(&s.positions(), s.region_side)?;
            println!("{cov:?}");
        }
        Command::Config => {
            print!("{}", config_to_toml(&ctx.config)?);
        }
    }
    Ok(())
}
