use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raremap_quant::commands::{axes, demo, fit, metrics, quantize};
use raremap_quant::config::RunConfig;
use raremap_quant::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "raremap-quant", version, about = "Prototype maps of rare random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, env = "RMQ_THREADS")]
    threads: Option<usize>,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the metamodel on `io.inputs` and `io.maps`.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Run the prototype maps algorithm.
    Quantize {
        #[command(flatten)]
        common: Common,
        /// Use a built-in map generator instead of the metamodel bundle.
        #[arg(long, value_enum)]
        analytic: Option<quantize::Analytic>,
    },
    /// Metamodel and estimator metrics against `io.truth`.
    Metrics {
        #[command(flatten)]
        common: Common,
    },
    /// Export a sample in the plane of the first two FPCA axes.
    FpcaAxes {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Write a Campbell2D map database.
    CampbellDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, value_enum, default_value = "sobol")]
        design: demo::Design,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Fit { common }
            | Command::Quantize { common, .. }
            | Command::Metrics { common }
            | Command::FpcaAxes { common, .. }
            | Command::CampbellDemo { common, .. } => common,
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let common = cli.command.common();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    pool.build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let cfg = RunConfig::load(&common.config, common.seed)?;
    match &cli.command {
        Command::Fit { .. } => fit::run(&cfg),
        Command::Quantize { analytic, .. } => quantize::run(&cfg, *analytic),
        Command::Metrics { .. } => metrics::run(&cfg),
        Command::FpcaAxes { samples, .. } => axes::run(&cfg, *samples),
        Command::CampbellDemo { samples, design, .. } => demo::run(&cfg, *samples, *design),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
