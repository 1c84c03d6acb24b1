//! Thin command-line front end over the pipeline library. Each subcommand
//! reads its inputs from the run directory, writes versioned artifacts, and
//! appends to the run manifest; exit codes are categorized (2 config,
//! 3 dependency, 4 data, 5 numeric/training, 6 io).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phonoscope::pipeline::{
    cmd_augment, cmd_compare, cmd_evaluate, cmd_explain, cmd_features, cmd_ingest,
    cmd_preprocess, cmd_report, cmd_synth_corpus, cmd_train, Config, PipelineError, RunContext,
};

#[derive(Parser)]
#[command(name = "phonoscope", version, about = "Voice-nodule screening pipeline")]
struct Cli {
    /// Path to the TOML config; missing file means built-in defaults.
    #[arg(long, global = true, default_value = "phonoscope.toml")]
    config: PathBuf,
    /// Run directory receiving the artifacts.
    #[arg(long, global = true, default_value = "run")]
    run: PathBuf,
    /// Override the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic phonation corpus.
    SynthCorpus {
        /// Output directory (defaults to the config's corpus root).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of clips (half normal, half nodule).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Validate the corpus against its manifest and record a listing.
    Ingest,
    /// Resample, filter, trim, and normalize every clip.
    Preprocess,
    /// Extract mel/MFCC/chroma matrices and scaling exponents.
    Features,
    /// Materialize a balanced-corpus preview via augmentation.
    Augment,
    /// Train one classifier on a seeded split.
    Train {
        #[arg(long)]
        kind: Option<String>,
    },
    /// Evaluate a trained classifier on its recorded test split.
    Evaluate {
        #[arg(long)]
        kind: Option<String>,
    },
    /// Repeated-seed study across the six model families.
    Compare,
    /// Permutation feature importance for a trained classifier.
    Explain {
        #[arg(long)]
        kind: Option<String>,
    },
    /// Aggregate run artifacts into one readable report.
    Report,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = if cli.config.exists() {
        Config::load(&cli.config)?
    } else {
        Config::default()
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    phonoscope::pipeline::init_workers(config.workers);

    match cli.command {
        Command::SynthCorpus { out, n } => {
            let out = out.unwrap_or_else(|| PathBuf::from(&config.corpus.root));
            let n = n.unwrap_or(config.synth.n_clips);
            let (normal, nodule) = cmd_synth_corpus(&config, &out, n, config.seed)?;
            println!(
                "synth-corpus: wrote {} clips ({normal} normal, {nodule} nodule) to {}",
                normal + nodule,
                out.display()
            );
        }
        Command::Ingest => {
            let ctx = RunContext::create(config, &cli.run)?;
            let report = cmd_ingest(&ctx)?;
            println!(
                "ingest: {} clips ({} normal, {} nodule)",
                report.n_clips, report.n_normal, report.n_nodule
            );
        }
        Command::Preprocess => {
            let ctx = RunContext::create(config, &cli.run)?;
            let n = cmd_preprocess(&ctx)?;
            println!("preprocess: conditioned {n} clips");
        }
        Command::Features => {
            let ctx = RunContext::create(config, &cli.run)?;
            let n = cmd_features(&ctx)?;
            println!("features: extracted {n} matrices");
        }
        Command::Augment => {
            let ctx = RunContext::create(config, &cli.run)?;
            let (new, total) = cmd_augment(&ctx)?;
            println!("augment: materialized {new} new clips (balanced total {total})");
        }
        Command::Train { kind } => {
            let ctx = RunContext::create(config, &cli.run)?;
            let report = cmd_train(&ctx, kind.as_deref())?;
            println!(
                "train: {} finished after {} epochs (final val acc {:.4}) -> {}",
                report.kind, report.epochs, report.final_val_acc, report.model_path
            );
        }
        Command::Evaluate { kind } => {
            let ctx = RunContext::create(config, &cli.run)?;
            let m = cmd_evaluate(&ctx, kind.as_deref())?;
            println!(
                "evaluate: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} (n = {})",
                m.accuracy,
                m.precision,
                m.recall,
                m.f1,
                m.total()
            );
        }
        Command::Compare => {
            let ctx = RunContext::create(config, &cli.run)?;
            let report = cmd_compare(&ctx)?;
            for s in &report.stats {
                println!(
                    "compare: {:<16} mean {:.4} sd {:.4} ci95 ({:.4}, {:.4}) over {} runs",
                    s.kind.to_string(),
                    s.mean,
                    s.sd,
                    s.ci95.0,
                    s.ci95.1,
                    s.n_runs
                );
            }
            println!("compare: {} pairwise rows written", report.n_pairs);
        }
        Command::Explain { kind } => {
            let ctx = RunContext::create(config, &cli.run)?;
            let n = cmd_explain(&ctx, kind.as_deref())?;
            println!("explain: ranked {n} features -> importance.csv");
        }
        Command::Report => {
            let ctx = RunContext::create(config, &cli.run)?;
            let text = cmd_report(&ctx)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
