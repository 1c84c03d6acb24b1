//! The whole batch pipeline through the library API, at desk scale: synthetic
//! corpus, conditioning, features, a two-family comparison, and the report.
//!
//! Writes into a temporary directory and prints the report. The `phonoscope`
//! binary drives exactly these functions stage by stage.
//!
//! Run with: cargo run --release --example full_study

use phonoscope::pipeline::{
    cmd_compare, cmd_explain, cmd_features, cmd_ingest, cmd_preprocess, cmd_report,
    cmd_synth_corpus, Config, RunContext,
};

fn main() {
    let scratch = std::env::temp_dir().join("phonoscope_full_study");
    let _ = std::fs::remove_dir_all(&scratch);
    let corpus = scratch.join("corpus");
    let run = scratch.join("run");

    let mut config = Config::default();
    config.seed = 7;
    config.corpus.root = corpus.display().to_string();
    config.synth.n_clips = 60;
    config.experiment.n_runs = 2;
    config.model.max_epochs = 15;
    config.model.patience = 3;
    config.explain.n_repeats = 5;

    println!("scratch directory: {}", scratch.display());
    cmd_synth_corpus(&config, &corpus, config.synth.n_clips, config.seed).unwrap();
    let ctx = RunContext::create(config, &run).unwrap();

    let ingest = cmd_ingest(&ctx).unwrap();
    println!("ingest: {} clips", ingest.n_clips);
    println!("preprocess: {} clips", cmd_preprocess(&ctx).unwrap());
    println!("features: {} matrices", cmd_features(&ctx).unwrap());

    println!("compare: running the study (this is the slow part)...");
    let report = cmd_compare(&ctx).unwrap();
    println!("compare: {} kinds, {} pairs", report.stats.len(), report.n_pairs);

    println!("explain: {} features ranked", cmd_explain(&ctx, Some("simple_rnn")).unwrap());

    let text = cmd_report(&ctx).unwrap();
    println!("\n{text}");
}
