//! Walk a noisy, drifting, silence-padded clip through the conditioning
//! stages and show what each one does.
//!
//! Run with: cargo run --release --example preprocess_clip

use phonoscope::audio::AudioClip;
use phonoscope::preprocess::{
    condition_clip, frame_signal, noise_filter, normalize_amplitude, trim_silence,
    PreprocessConfig,
};

fn main() {
    let rate = 16_000u32;
    // 0.4 s silence + 1 s of tone over a slow drift + 0.4 s silence
    let mut samples = vec![0.0f64; 6_400];
    for i in 0..16_000 {
        let t = i as f64 / f64::from(rate);
        let tone = 0.4 * (2.0 * std::f64::consts::PI * 220.0 * t).sin();
        let drift = 0.2 * (2.0 * std::f64::consts::PI * 2.0 * t).sin();
        samples.push(tone + drift);
    }
    samples.extend(vec![0.0f64; 6_400]);
    let clip = AudioClip::new(samples, rate, "demo").unwrap();
    println!("input:        {:>6} samples, peak {:.3}", clip.samples.len(), clip.peak());

    let filtered = noise_filter(&clip, 30.0).unwrap();
    let mean_before = clip.samples.iter().sum::<f64>() / clip.samples.len() as f64;
    let mean_after = filtered.samples.iter().sum::<f64>() / filtered.samples.len() as f64;
    println!("noise_filter: drift/DC removed (mean {mean_before:+.2e} -> {mean_after:+.2e})");

    let trimmed = trim_silence(&filtered, -40.0, 100.0).unwrap();
    println!(
        "trim_silence: {:>6} samples left ({:.2} s)",
        trimmed.samples.len(),
        trimmed.duration_s()
    );

    let normalized = normalize_amplitude(&trimmed, 0.99).unwrap();
    println!("normalize:    peak {:.4}", normalized.peak());

    let cfg = PreprocessConfig::default();
    let conditioned = condition_clip(&clip, &cfg).unwrap();
    let frames = frame_signal(&conditioned, &cfg.framing).unwrap();
    println!(
        "framing:      {} frames of {} samples (25 ms / 10 ms hop, hann)",
        frames.n_frames(),
        frames.frame_len()
    );
}
