//! `pblab`: solve, tune and certify composite-norm penalized regressions.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 non-convergence,
//! 4 violated data assumption, 5 certification failure (1 for I/O errors).

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pblab::experiments::{DesignKind, EstimatorKind, ExperimentConfig, NoiseKind, TruthKind};

use crate::commands::{Outcome, Prepared};
use crate::config::{read_campaigns, read_json, GeneratorConfig, ModeName, RunConfig};
use crate::output::{timestamp, write_json, RunManifest};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(pblab::Error),
}

impl From<pblab::Error> for CliError {
    fn from(e: pblab::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        use pblab::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidInput(_)
                | E::DimensionMismatch { .. }
                | E::UnsatisfiableAssumption(_)
                | E::InvalidPremise(_)
                | E::Unsupported(_) => 2,
                E::NonConvergence { .. } | E::NotCertifiable(_) => 3,
                E::AssumptionViolated(_) | E::Degenerate(_) => 4,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "pblab", version, about = "Composite-norm penalized regression: solve, tune, certify")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for campaign trials.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance at given tuning parameters.
    Solve(InstanceArgs),
    /// Compute oracle tuning parameters.
    Tune(InstanceArgs),
    /// Check a prediction bound on one instance.
    Verify {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum)]
        mode: Option<ModeName>,
        /// `u` for `--mode theorem`.
        #[arg(long)]
        u: Option<f64>,
    },
    /// Run Monte Carlo certification campaigns.
    Campaign {
        /// Campaign with default settings when no config is given.
        #[arg(long)]
        estimator: Option<String>,
        /// Leave `solve_ms` empty so that reruns are byte-identical.
        #[arg(long)]
        omit_timing: bool,
    },
    /// List estimator labels and their parameters.
    Catalog,
}

#[derive(Args)]
struct InstanceArgs {
    /// Catalog label (default parameters).
    #[arg(long)]
    estimator: Option<String>,
    /// Problem file: {"x": [[..]], "y": [..], "beta_star": [..], "eps": [..]}.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Tuning parameters, comma-separated (one value is broadcast).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Vec<f64>,
    /// Tuning constants c, comma-separated.
    #[arg(long, value_delimiter = ',')]
    c: Vec<f64>,
    /// Generator: sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Generator: dimension.
    #[arg(long)]
    p: Option<usize>,
    /// Generator: equicorrelation.
    #[arg(long)]
    rho: Option<f64>,
    /// Generator: Gaussian noise level.
    #[arg(long)]
    sigma: Option<f64>,
    /// Generator: number of nonzero entries of beta*.
    #[arg(long)]
    sparsity: Option<usize>,
    /// Generator: value of the nonzero entries of beta*.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Solver KKT tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn kind(label: &str) -> Result<EstimatorKind, CliError> {
    Ok(EstimatorKind::from_label(label)?)
}

/// Merges the config file and the flags; flags win.
fn run_config(cli: &Cli, args: &InstanceArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match (&cli.config, &args.estimator) {
        (Some(path), _) => read_json::<RunConfig>(path)?,
        (None, Some(label)) => RunConfig::new(kind(label)?),
        (None, None) => return Err(CliError::Config("pass --estimator or --config".into())),
    };
    if let (Some(_), Some(label)) = (&cli.config, &args.estimator) {
        cfg.estimator = kind(label)?;
    }
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    if !args.lambda.is_empty() {
        cfg.lambda = args.lambda.clone();
    }
    if !args.c.is_empty() {
        cfg.c = args.c.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.tol {
        cfg.solver.tol = t;
    }
    let touches_generator = args.n.is_some()
        || args.p.is_some()
        || args.rho.is_some()
        || args.sigma.is_some()
        || args.sparsity.is_some()
        || args.amplitude.is_some();
    if touches_generator {
        let identity = cfg.estimator.needs_identity_design();
        let mut g = cfg.generator.clone().unwrap_or_else(|| {
            let p = args.p.or(args.n).unwrap_or(100);
            let n = if identity { p } else { args.n.unwrap_or(p) };
            GeneratorConfig {
                n,
                p,
                design: if identity { DesignKind::Identity } else { DesignKind::default() },
                noise: NoiseKind::Gaussian { sigma: 1.0 },
                beta_star: TruthKind::default(),
            }
        });
        if let Some(n) = args.n {
            g.n = n;
        }
        if let Some(p) = args.p {
            g.p = p;
        }
        if let Some(rho) = args.rho {
            g.design = DesignKind::Equicorrelated { rho };
        }
        if let Some(sigma) = args.sigma {
            g.noise = g.noise.with_sigma(sigma);
        }
        if args.sparsity.is_some() || args.amplitude.is_some() {
            let (s0, a0) = match g.beta_star {
                TruthKind::Sparse { s, amplitude } => (s, amplitude),
                TruthKind::Custom { .. } => (5, 1.0),
            };
            let s = args.sparsity.unwrap_or(s0.min(g.p));
            g.beta_star = TruthKind::Sparse { s, amplitude: args.amplitude.unwrap_or(a0) };
        }
        cfg.generator = Some(g);
    }
    if cfg.data.is_none() && cfg.generator.is_none() {
        return Err(CliError::Config("no data: pass --data or generator settings (--n, --p)".into()));
    }
    cfg.solver.validate()?;
    cfg.fixed_point.validate()?;
    Ok(cfg)
}

fn campaign_configs(cli: &Cli, estimator: &Option<String>) -> Result<Vec<ExperimentConfig>, CliError> {
    let mut configs = match (&cli.config, estimator) {
        (Some(path), _) => read_campaigns(path)?,
        (None, Some(label)) => vec![commands::default_campaign(kind(label)?)],
        (None, None) => return Err(CliError::Config("campaign needs --config (or --estimator)".into())),
    };
    let base = base_dir(cli);
    for cfg in &mut configs {
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        cfg.resolve_files(&base)?;
        cfg.validate()?;
    }
    Ok(configs)
}

fn base_dir(cli: &Cli) -> PathBuf {
    cli.config
        .as_ref()
        .and_then(|p| p.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn init_logging() -> Result<(), CliError> {
    let level = std::env::var("PBLAB_LOG").unwrap_or_else(|_| "error".into());
    if !matches!(level.as_str(), "error" | "info" | "debug") {
        return Err(CliError::Config(format!("PBLAB_LOG must be error, info or debug, got '{level}'")));
    }
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    Ok(())
}

/// Runs the command; returns the manifest fields and the outcome.
fn dispatch(cli: &Cli) -> (String, u64, Result<Outcome, CliError>) {
    let out = &cli.out_dir;
    let seed_or = |s: u64| cli.seed.unwrap_or(s);
    match &cli.command {
        Command::Solve(args) | Command::Tune(args) => {
            let cfg = match run_config(cli, args) {
                Ok(c) => c,
                Err(e) => return (String::new(), seed_or(0), Err(e)),
            };
            let run = Prepared::new(cfg);
            let seed = run.config.seed;
            let res = if matches!(cli.command, Command::Solve(_)) {
                commands::solve_cmd(&run, &base_dir(cli), out)
            } else {
                commands::tune_cmd(&run, &base_dir(cli), out)
            };
            (run.hash, seed, res)
        }
        Command::Verify { instance, mode, u } => {
            let mut cfg = match run_config(cli, instance) {
                Ok(c) => c,
                Err(e) => return (String::new(), seed_or(0), Err(e)),
            };
            if mode.is_some() {
                cfg.mode = *mode;
            }
            if u.is_some() {
                cfg.u = *u;
            }
            let seed = cfg.seed;
            let run = Prepared::new(cfg);
            let res = commands::verify_cmd(&run, &base_dir(cli), out);
            (run.hash, seed, res)
        }
        Command::Campaign { estimator, omit_timing } => {
            let configs = match campaign_configs(cli, estimator) {
                Ok(c) => c,
                Err(e) => return (String::new(), seed_or(0), Err(e)),
            };
            let seed = configs[0].seed;
            let run = Prepared::new(configs);
            if cli.jobs == 0 {
                return (run.hash, seed, Err(CliError::Config("--jobs must be at least 1".into())));
            }
            let res = commands::campaign_cmd(&run, cli.jobs, !omit_timing, out);
            (run.hash, seed, res)
        }
        Command::Catalog => (output::config_hash(&"catalog"), seed_or(0), commands::catalog_cmd(out)),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Solve(_) => "solve",
        Command::Tune(_) => "tune",
        Command::Verify { .. } => "verify",
        Command::Campaign { .. } => "campaign",
        Command::Catalog => "catalog",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_logging() {
        eprintln!("pblab: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let started_at = timestamp();
    if let Err(e) = std::fs::create_dir_all(&cli.out_dir) {
        eprintln!("pblab: cannot create {}: {e}", cli.out_dir.display());
        return ExitCode::from(1);
    }
    let (hash, seed, result) = dispatch(&cli);
    let (code, outputs) = match result {
        Ok(o) => (o.exit_code, o.outputs),
        Err(e) => {
            eprintln!("pblab: {e}");
            (e.exit_code(), Vec::new())
        }
    };
    let manifest = RunManifest {
        tool: "pblab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command_name(&cli.command).into(),
        config_hash: hash,
        seed,
        started_at,
        finished_at: timestamp(),
        exit_code: code,
        outputs,
    };
    if let Err(e) = write_json(&cli.out_dir.join("manifest.json"), &manifest) {
        eprintln!("pblab: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code as u8)
}
