//! Scratch probe for corpus difficulty tuning (removed before release).

use phonoscope::experiments::{repeat_runs, FeatureExtractor, SplitSpec, StudySample};
use phonoscope::models::{ModelConfig, ModelKind};
use phonoscope::pipeline::{cmd_features, cmd_ingest, cmd_preprocess, cmd_synth_corpus, Config, RunContext};

fn main() {
    let kinds: Vec<ModelKind> = std::env::args()
        .skip(1)
        .filter_map(|s| ModelKind::parse(&s))
        .collect();
    let kinds = if kinds.is_empty() {
        vec![ModelKind::Svm, ModelKind::SimpleRnn]
    } else {
        kinds
    };

    let scratch = std::env::temp_dir().join("phonoscope_probe_tuning");
    let _ = std::fs::remove_dir_all(&scratch);
    let corpus = scratch.join("corpus");
    let mut config = Config::default();
    config.seed = 7;
    config.corpus.root = corpus.display().to_string();
    cmd_synth_corpus(&config, &corpus, 200, config.seed).unwrap();
    let ctx = RunContext::create(config.clone(), &scratch.join("run")).unwrap();
    cmd_ingest(&ctx).unwrap();
    cmd_preprocess(&ctx).unwrap();
    cmd_features(&ctx).unwrap();

    let samples: Vec<StudySample> = phonoscope::pipeline::load_study_samples(&ctx).unwrap();
    let extractor: FeatureExtractor = config.extractor().unwrap();
    let split = SplitSpec::default();
    let base_seed = phonoscope::util::mix_seed(config.seed, "compare-runs");
    let env_f64 = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<f64>().ok());
    let env_usize = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<usize>().ok());
    for kind in kinds {
        let t0 = std::time::Instant::now();
        let mut model_config: ModelConfig = config.model_config(kind).unwrap();
        if let Some(lr) = env_f64("PROBE_LR") {
            model_config.lr = lr;
        }
        if let Some(p) = env_usize("PROBE_PATIENCE") {
            model_config.patience = p;
        }
        if let Some(e) = env_usize("PROBE_EPOCHS") {
            model_config.max_epochs = e;
        }
        if let Some(h) = env_usize("PROBE_HIDDEN") {
            model_config.hidden_units = h;
        }
        let policy = config.augment_policy();
        let artifacts =
            repeat_runs(&model_config, &samples, &extractor, &split, policy.as_ref(), 5, base_seed)
                .unwrap();
        let s = &artifacts.stats;
        let epochs: Vec<usize> = artifacts.histories.iter().map(Vec::len).collect();
        println!(
            "{:<16} accs {:?} mean {:.4} sd {:.4} epochs {:?} [{:.1}s]",
            kind.to_string(),
            s.accuracies.iter().map(|a| (a * 10000.0).round() / 10000.0).collect::<Vec<_>>(),
            s.mean,
            s.sd,
            epochs,
            t0.elapsed().as_secs_f64()
        );
    }
}
