use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gpo::app::{self, RunConfig, CHECKPOINT_FILE, CURVE_FILE, JOURNAL_FILE};
use gpo::data::Split;

/// Evolve and refine sectioned prompt templates.
#[derive(Parser)]
#[command(name = "gpo", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "gpo.toml")]
    config: PathBuf,
    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolutionary search.
    Optimize {
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Refine the elite of a checkpoint with a surrogate-screened local search.
    LocalSearch {
        /// Checkpoint to refine; `<output_dir>/checkpoint.json` by default.
        #[arg(long, alias = "resume")]
        checkpoint: Option<PathBuf>,
    },
    /// Score a prompt on one split.
    Evaluate {
        /// Prompt file; the base template when omitted.
        #[arg(long)]
        prompt: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Write the per-generation fitness curve of a journal.
    Report {
        /// Journal file; `<output_dir>/journal.jsonl` by default.
        #[arg(long)]
        journal: Option<PathBuf>,
        /// Output table; `<output_dir>/fitness_curve.tsv` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::load(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Optimize { resume } => {
            let report = app::cmd_optimize(&config, resume.as_deref()).context("optimize failed")?;
            println!("elite validation fitness: {}", report.elite.f_val.unwrap_or(0.0));
            if let Some(score) = report.test_score {
                println!("test score: {score}");
            }
            println!("artifacts in {}", config.output_dir.display());
        }
        Command::LocalSearch { checkpoint } => {
            let checkpoint = checkpoint.unwrap_or_else(|| config.output_dir.join(CHECKPOINT_FILE));
            let report = app::cmd_localsearch(&config, &checkpoint).context("local search failed")?;
            let best = &report.outcome.best;
            if report.outcome.no_sites {
                println!("the elite has no index parameter; returned unchanged");
            } else {
                println!(
                    "best candidate {} (incumbent: {}): combined {} = (val {} + train {}) / 2",
                    &best.digest[..12],
                    best.is_incumbent,
                    best.combined,
                    best.val,
                    best.train
                );
            }
            println!("artifacts in {}", config.output_dir.display());
        }
        Command::Evaluate { prompt, split } => {
            let report = app::cmd_evaluate(&config, prompt.as_deref(), split).context("evaluate failed")?;
            println!(
                "{split} score: {} over {} cases ({} unparseable)",
                report.score,
                report.cases.len(),
                report.parse_failures
            );
        }
        Command::Report { journal, out } => {
            let journal = journal.unwrap_or_else(|| config.output_dir.join(JOURNAL_FILE));
            let out = out.unwrap_or_else(|| config.output_dir.join(CURVE_FILE));
            let curve = app::cmd_report(&journal, &out, &config.digest()).context("report failed")?;
            for p in &curve {
                println!("{}\t{:.4}\t{:.4}", p.generation, p.mean, p.std);
            }
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
