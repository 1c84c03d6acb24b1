//! Generate synthetic phonation clips with the normal and nodule presets and
//! compare their surface properties.
//!
//! Run with: cargo run --release --example synthesize_corpus

use phonoscope::audio::{synthesize_phonation, SynthesisParams};
use phonoscope::preprocess::{frame_signal, FramingParams, WindowKind};
use phonoscope::spectral::{power_spectrogram, spectral_flatness};

fn mean_flatness(clip: &phonoscope::audio::AudioClip) -> f64 {
    let framing = FramingParams::new(25.0, 10.0, WindowKind::Hann).unwrap();
    let frames = frame_signal(clip, &framing).unwrap();
    let spec = power_spectrogram(&frames, 512).unwrap();
    let per_frame: Vec<f64> = (0..spec.rows()).map(|t| spectral_flatness(spec.row(t))).collect();
    per_frame.iter().sum::<f64>() / per_frame.len() as f64
}

fn main() {
    println!("preset      f0     jitter% shimmer% snr_dB  peak   flatness");
    for (name, params) in [
        ("normal", SynthesisParams::normal(130.0)),
        ("nodule", SynthesisParams::nodule(130.0)),
    ] {
        for seed in 0..3u64 {
            let clip = synthesize_phonation(&params, seed).unwrap();
            println!(
                "{name:<10} {:>6.1} {:>7.1} {:>8.1} {:>6.1} {:>6.3} {:>9.5}",
                params.f0_hz,
                params.jitter_pct,
                params.shimmer_pct,
                params.noise_snr_db,
                clip.peak(),
                mean_flatness(&clip),
            );
        }
    }
    println!("\nThe nodule preset is rougher (higher jitter/shimmer) and noisier,");
    println!("which shows up directly as higher spectral flatness.");
}
