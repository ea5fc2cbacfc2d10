mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fastadd::data::TargetColumn;

use commands::CliError;
use config::{ConfigError, ExperimentConfig};

/// Fast additive kernel experiments: matvec accuracy, error bounds, feature windows and KRR.
///
/// Exit codes: 0 success, 1 configuration error, 2 numerical failure.
/// `FASTADD_THREADS` sets the worker count (1 runs sequentially).
#[derive(Parser, Debug)]
#[command(name = "fastadd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fast against dense products with the all-ones vector.
    MatvecBench {
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        presets: Option<Vec<String>>,
        #[arg(long)]
        dense_limit: Option<usize>,
    },
    /// Error bounds next to measured worst-case approximation errors.
    ErrorBounds {
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        ms: Option<Vec<usize>>,
    },
    /// Grouping, grid search and the fitted model.
    Krr,
    /// Feature windows from one grouping technique.
    Group,
    /// Sensitivity indices and the windows they select.
    Gsi,
}

#[derive(Args, Debug)]
struct Overrides {
    /// TOML experiment file; flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV file with a header row.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Target column name or 0-based index.
    #[arg(long, global = true)]
    target: Option<String>,
    /// Use the built-in synthetic problem with this many rows.
    #[arg(long, global = true)]
    synthetic_n: Option<usize>,
    /// Omit timing columns so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,
    #[arg(long, global = true)]
    family: Option<String>,
    /// `fine`, `default`, `rough`, an even grid size, or `dense`.
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(long, global = true)]
    technique: Option<String>,
    #[arg(long, global = true)]
    strategy: Option<String>,
    #[arg(long, global = true)]
    d_max: Option<usize>,
    #[arg(long, global = true)]
    n_feat: Option<usize>,
    #[arg(long, global = true)]
    gsi_score: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    ells: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let o = &cli.overrides;
    let mut cfg = match &o.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &o.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.data {
        cfg.data.path = Some(v.clone());
    }
    if let Some(v) = &o.target {
        cfg.data.target = Some(match v.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(v.clone()),
        });
    }
    if let Some(v) = o.synthetic_n {
        cfg.data.synthetic_n = Some(v);
    }
    if o.no_timing {
        cfg.timing = false;
    }
    if let Some(v) = &o.family {
        cfg.kernel.family = v.clone();
    }
    if let Some(v) = &o.backend {
        cfg.kernel.backend = v.clone();
    }
    if let Some(v) = &o.technique {
        cfg.grouping.technique = v.clone();
    }
    if let Some(v) = &o.strategy {
        cfg.grouping.params.strategy = config::parse_strategy(v)?;
    }
    if let Some(v) = o.d_max {
        cfg.grouping.params.d_max = v;
    }
    if let Some(v) = o.n_feat {
        cfg.grouping.params.n_feat = Some(v);
    }
    if let Some(v) = o.gsi_score {
        cfg.gsi.score = v;
    }
    if let Some(v) = &o.ells {
        cfg.grid.ells = v.clone();
        cfg.matvec.ells = v.clone();
        cfg.bounds.ells = v.clone();
    }
    if let Some(v) = &o.betas {
        cfg.grid.betas = v.clone();
    }
    match &cli.command {
        Command::MatvecBench { sizes, presets, dense_limit } => {
            if let Some(v) = sizes {
                cfg.matvec.sizes = v.clone();
            }
            if let Some(v) = presets {
                cfg.matvec.presets = v.clone();
            }
            if let Some(v) = dense_limit {
                cfg.matvec.dense_limit = *v;
            }
        }
        Command::ErrorBounds { probes, ms } => {
            if let Some(v) = probes {
                cfg.bounds.probes = *v;
            }
            if let Some(v) = ms {
                cfg.bounds.ms = v.clone();
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threads_from_env() -> Result<(), ConfigError> {
    if let Ok(v) = std::env::var("FASTADD_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| ConfigError(format!("FASTADD_THREADS = '{v}' is not a thread count")))?;
        fastadd::par::configure_threads(n);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    threads_from_env()?;
    let cfg = resolve(cli)?;
    match cli.command {
        Command::MatvecBench { .. } => commands::cmd_matvec_bench(&cfg),
        Command::ErrorBounds { .. } => commands::cmd_error_bounds(&cfg),
        Command::Krr => commands::cmd_krr(&cfg),
        Command::Group => commands::cmd_group(&cfg),
        Command::Gsi => commands::cmd_gsi(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
