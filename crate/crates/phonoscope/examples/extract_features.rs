//! Extract mel, MFCC, and chroma matrices from a synthesized vowel and print
//! a slice of each.
//!
//! Run with: cargo run --release --example extract_features

use phonoscope::audio::{synthesize_phonation, SynthesisParams};
use phonoscope::preprocess::{condition_clip, PreprocessConfig};
use phonoscope::spectral::{extract_all, feature_names, FeatureParams};

fn main() {
    let clip = synthesize_phonation(&SynthesisParams::normal(150.0), 42).unwrap();
    let pre = PreprocessConfig::default();
    let conditioned = condition_clip(&clip, &pre).unwrap();
    let params = FeatureParams::default();
    let bundle = extract_all(&conditioned, &pre.framing, &params).unwrap();

    println!(
        "mel      {} x {}   (log-energy, dB)",
        bundle.mel.n_frames(),
        bundle.mel.n_features()
    );
    println!("mfcc     {} x {}", bundle.mfcc.n_frames(), bundle.mfcc.n_features());
    println!("chroma   {} x {}   (max-normalized pitch classes)", bundle.chroma.n_frames(), bundle.chroma.n_features());
    println!("combined {} x {}", bundle.combined.n_frames(), bundle.combined.n_features());

    let names = feature_names(params.n_mels, params.n_mfcc, false);
    println!("\nframe 10, first 8 columns:");
    for (name, v) in names.iter().zip(bundle.combined.data.row(10)).take(8) {
        println!("  {name:<10} {v:>9.3}");
    }

    // chroma argmax should sit on the pitch class of f0's strongest harmonics
    let row = bundle.chroma.data.row(10);
    let argmax = (0..12).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    const CLASSES: [&str; 12] =
        ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];
    println!("\nchroma argmax at frame 10: {} (f0 = 150 Hz ~ D)", CLASSES[argmax]);
}
