//! A miniature repeated-seed comparison: three model families, three runs
//! each, with confidence intervals, Welch t-tests, and Cohen's d.
//!
//! Run with: cargo run --release --example compare_models

use phonoscope::audio::{synthesize_phonation, LabeledSample, SynthesisParams};
use phonoscope::experiments::{
    compare_all, repeat_runs, FeatureExtractor, SplitSpec, StudySample,
};
use phonoscope::models::{ModelConfig, ModelKind};
use phonoscope::util::mix_seed;

fn main() {
    let seed = 11u64;
    println!("synthesizing 80 clips...");
    let extractor = FeatureExtractor::default();
    let samples: Vec<StudySample> = (0..80)
        .map(|i| {
            let nodule = i % 2 == 1;
            let f0 = 105.0 + (i % 10) as f64 * 13.0;
            let params =
                if nodule { SynthesisParams::nodule(f0) } else { SynthesisParams::normal(f0) };
            let clip = synthesize_phonation(&params, mix_seed(seed, &format!("clip{i}"))).unwrap();
            extractor
                .prepare(&LabeledSample {
                    clip,
                    label: u8::from(nodule),
                    speaker_id: format!("spk_{i:03}"),
                    augmented: false,
                })
                .unwrap()
        })
        .collect();

    let split_spec = SplitSpec::default();
    let kinds = [ModelKind::SimpleRnn, ModelKind::Lstm, ModelKind::Svm];
    let mut stats = Vec::new();
    for kind in kinds {
        let mut config = ModelConfig::new(kind);
        config.max_epochs = 20;
        config.patience = 4;
        let artifacts =
            repeat_runs(&config, &samples, &extractor, &split_spec, None, 3, 1000).unwrap();
        let s = &artifacts.stats;
        println!(
            "{:<12} accuracies {:?} -> mean {:.4} sd {:.4} ci95 ({:.4}, {:.4})",
            kind.to_string(),
            s.accuracies.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            s.mean,
            s.sd,
            s.ci95.0,
            s.ci95.1
        );
        stats.push(artifacts.stats);
    }

    println!("\npairwise comparisons:");
    for p in compare_all(&stats).unwrap() {
        println!(
            "  {:<12} vs {:<12} t = {:>7.3}  p = {:.4}  d = {:>7.3}",
            p.a.to_string(),
            p.b.to_string(),
            p.t_stat.unwrap_or(f64::NAN),
            p.p_value.unwrap_or(f64::NAN),
            p.cohens_d
        );
    }
}
