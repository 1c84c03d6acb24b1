//! Train one classifier on a small synthetic corpus and evaluate it.
//!
//! Run with: cargo run --release --example train_classifier [kind]
//! where kind is one of: simple_rnn, rnn_attention, lstm, lstm_attention,
//! cnn, hybrid_cnn_lstm, svm (default: lstm).

use phonoscope::audio::{synthesize_phonation, LabeledSample, SynthesisParams};
use phonoscope::experiments::{
    evaluate, stratified_split, train_model, FeatureExtractor, SplitSpec, StudySample,
};
use phonoscope::models::{ModelConfig, ModelKind};
use phonoscope::util::mix_seed;

fn main() {
    let kind = std::env::args()
        .nth(1)
        .and_then(|s| ModelKind::parse(&s))
        .unwrap_or(ModelKind::Lstm);
    let seed = 7u64;

    println!("synthesizing 80 clips...");
    let extractor = FeatureExtractor::default();
    let samples: Vec<StudySample> = (0..80)
        .map(|i| {
            let nodule = i % 2 == 1;
            let f0 = 110.0 + (i % 8) as f64 * 15.0;
            let params =
                if nodule { SynthesisParams::nodule(f0) } else { SynthesisParams::normal(f0) };
            let clip = synthesize_phonation(&params, mix_seed(seed, &format!("clip{i}"))).unwrap();
            let labeled = LabeledSample {
                clip,
                label: u8::from(nodule),
                speaker_id: format!("spk_{i:03}"),
                augmented: false,
            };
            extractor.prepare(&labeled).unwrap()
        })
        .collect();

    let meta: Vec<_> = samples.iter().map(StudySample::meta).collect();
    let split = stratified_split(&meta, &SplitSpec::default().with_seed(seed)).unwrap();
    let train: Vec<&StudySample> = split.train.iter().map(|&i| &samples[i]).collect();
    let val: Vec<&StudySample> = split.val.iter().map(|&i| &samples[i]).collect();
    let test: Vec<&StudySample> = split.test.iter().map(|&i| &samples[i]).collect();
    println!("split: {} train / {} val / {} test", train.len(), val.len(), test.len());

    let config = ModelConfig::new(kind).with_seed(mix_seed(seed, "init"));
    println!("training {kind}...");
    let outcome = train_model(&config, &train, &val, seed).unwrap();
    for h in &outcome.history {
        println!(
            "  epoch {:>2}: train loss {:.4}  val loss {:.4}  val acc {:.3}",
            h.epoch, h.train_loss, h.val_loss, h.val_acc
        );
    }

    let m = evaluate(&outcome.model, &test).unwrap();
    println!(
        "\ntest: accuracy {:.3} precision {:.3} recall {:.3} f1 {:.3} (tp {} fp {} fn {} tn {})",
        m.accuracy, m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_, m.tn
    );
}
