use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use semra_core::corpus::{load_corpus, synth_corpus};
use semra_core::harness::{emit_outputs, run_experiment, ExperimentConfig};

/// Semantic-aware downlink power allocation experiments.
#[derive(Parser)]
#[command(name = "semra", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides SEMRA_OUT_DIR and the config's out_dir.
        #[arg(long, env = "SEMRA_OUT_DIR")]
        out: Option<PathBuf>,
        /// Sweep points trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Added to every configured seed.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Write a synthetic corpus with Beta(2, 2) importances.
    Synth {
        #[arg(long)]
        images: usize,
        #[arg(long)]
        triplets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a corpus file against the schema.
    Validate { corpus: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            seed_offset,
        } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?
                .with_seed_offset(seed_offset);
            let dir = out
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            let result = run_experiment(&cfg, jobs)?;
            for path in emit_outputs(&result, &dir)? {
                println!("{}", path.display());
            }
        }
        Command::Synth {
            images,
            triplets,
            seed,
            out,
        } => {
            let corpus = synth_corpus(images, triplets, seed)?;
            corpus.save(&out)?;
            println!("wrote {} records to {}", corpus.records.len(), out.display());
        }
        Command::Validate { corpus } => {
            let c = load_corpus(&corpus)?;
            println!(
                "{}: ok ({} records, {} triplets)",
                corpus.display(),
                c.records.len(),
                c.records.iter().map(|r| r.len()).sum::<usize>()
            );
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
