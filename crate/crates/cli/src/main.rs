//! `lcm`: derive probes, simulate or ingest answers, score, summarize, pair and correlate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

mod commands;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lcm_core::metrics::{JaccScale, DEFAULT_THRESHOLD};
use lcm_core::Format;

#[derive(Parser, Debug)]
#[command(
    name = "lcm",
    version,
    about = "Logical-consistency scoring for vision-language model answers"
)]
struct Cli {
    /// Worker threads for data-parallel stages (default: available parallelism).
    #[arg(long, global = true, env = "LCM_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expand a manifest into MC and yes/no probes.
    Derive {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer a tests file with a synthetic model.
    Simulate {
        #[arg(long)]
        tests: PathBuf,
        /// Manifest holding ground truth; required by perfect, shortcut and noisy.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// perfect | uniform | overconfident_yes | shortcut | noisy:SIGMA
        #[arg(long)]
        profile: sim::ProfileKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Chance of committing to the true answer (shortcut default 0.9, noisy default 1).
        #[arg(long)]
        accuracy_target: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join answers to probes and score every complete sample.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        format: Format,
        #[arg(long)]
        tests: PathBuf,
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to list samples excluded for missing probes (JSON lines).
        #[arg(long)]
        coverage: Option<PathBuf>,
        #[command(flatten)]
        scoring: ScoringArgs,
    },
    /// Aggregate one score file into a summary row.
    Summarize {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        dataset: String,
        /// Summary row as JSON lines.
        #[arg(long)]
        out: PathBuf,
        /// Also write the row as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write the row as an aligned text table.
        #[arg(long)]
        txt: Option<PathBuf>,
    },
    /// Combine summary rows into CSV/text tables and a distribution file.
    Table {
        /// Summary files (JSON lines); rows keep file order.
        #[arg(long, required = true, num_args = 1..)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        txt: Option<PathBuf>,
        /// Model, LCM and response-class rates sorted by increasing LCM.
        #[arg(long)]
        distribution: Option<PathBuf>,
    },
    /// Build a paired manifest from a pool of single-image items.
    Pair {
        /// MC manifest (mc_pairs) or true/false item file (tf_pairs).
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 50)]
        pairs_per_category: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        max_attempts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate LCM with Acc, J-Acc and F1 across models, per dataset.
    Correlate {
        #[arg(long, required = true, num_args = 1..)]
        summaries: Vec<PathBuf>,
        /// Reports as JSON lines, one per dataset.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct ScoringArgs {
    /// Confirmation threshold for response classes and J-Acc.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Scale of the paired-layout J-Acc comparison.
    #[arg(long, default_value = "root")]
    nb_jacc_scale: JaccScale,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
#[value(rename_all = "snake_case")]
enum Mode {
    McPairs,
    TfPairs,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("LCM_LOG_LEVEL", "warn");
    env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .init();
}

#[cfg(feature = "parallel")]
fn init_workers(workers: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(commands::CliError::Usage("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn init_workers(workers: Option<usize>) -> anyhow::Result<()> {
    if workers.is_some_and(|n| n > 1) {
        log::warn!("built without the parallel feature; --workers is ignored");
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_workers(cli.workers)?;
    match cli.command {
        Command::Derive {
            manifest,
            format,
            out,
        } => commands::derive(&manifest, format, &out),
        Command::Simulate {
            tests,
            manifest,
            profile,
            seed,
            accuracy_target,
            out,
        } => commands::simulate(commands::SimulateArgs {
            tests: &tests,
            manifest: manifest.as_deref(),
            profile,
            seed,
            accuracy_target,
            out: &out,
        }),
        Command::Score {
            manifest,
            format,
            tests,
            probs,
            out,
            coverage,
            scoring,
        } => {
            let cfg = commands::scoring_config(scoring.threshold, scoring.nb_jacc_scale)?;
            commands::score(
                &manifest,
                format,
                &tests,
                &probs,
                &out,
                coverage.as_deref(),
                &cfg,
            )
        }
        Command::Summarize {
            scores,
            model,
            dataset,
            out,
            csv,
            txt,
        } => commands::summarize(
            &scores,
            &model,
            &dataset,
            &out,
            csv.as_deref(),
            txt.as_deref(),
        ),
        Command::Table {
            summaries,
            csv,
            txt,
            distribution,
        } => commands::table(
            &summaries,
            csv.as_deref(),
            txt.as_deref(),
            distribution.as_deref(),
        ),
        Command::Pair {
            pool,
            mode,
            pairs_per_category,
            seed,
            max_attempts,
            out,
        } => {
            let mode = match mode {
                Mode::McPairs => lcm_core::derive::PairingMode::McPairs,
                Mode::TfPairs => lcm_core::derive::PairingMode::TfPairs,
            };
            let cfg = lcm_core::derive::PairingConfig {
                pairs_per_category,
                seed,
                mode,
                max_attempts,
            };
            commands::pair(&pool, &cfg, &out)
        }
        Command::Correlate { summaries, out } => commands::correlate(&summaries, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
        Err(_) => ExitCode::from(commands::EXIT_INTERNAL),
    }
}
