//! Apply each augmentation transform to a test tone and measure the effect.
//!
//! Run with: cargo run --release --example augment_audio

use phonoscope::audio::AudioClip;
use phonoscope::augment::{add_gaussian_noise, pitch_shift, time_stretch};
use phonoscope::spectral::dominant_frequency;

fn tone(freq: f64, rate: u32, secs: f64) -> AudioClip {
    let n = (secs * f64::from(rate)) as usize;
    let samples = (0..n)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin())
        .collect();
    AudioClip::new(samples, rate, "tone").unwrap()
}

fn main() {
    let clip = tone(440.0, 16_000, 2.0);
    println!(
        "input: 440 Hz tone, {:.3} s, dominant {:.2} Hz",
        clip.duration_s(),
        dominant_frequency(&clip.samples, clip.sample_rate)
    );

    for semis in [-2.0, 2.0, 12.0] {
        let out = pitch_shift(&clip, semis).unwrap();
        let f = dominant_frequency(&out.samples, out.sample_rate);
        let expected = 440.0 * 2f64.powf(semis / 12.0);
        println!(
            "pitch_shift {semis:+5.1} st: dominant {f:7.2} Hz (expected {expected:7.2}), duration {:.3} s",
            out.duration_s()
        );
    }

    for factor in [0.9, 1.1] {
        let out = time_stretch(&clip, factor).unwrap();
        let f = dominant_frequency(&out.samples, out.sample_rate);
        println!(
            "time_stretch x{factor}: duration {:.3} s (expected {:.3}), dominant {f:.2} Hz",
            out.duration_s(),
            clip.duration_s() / factor
        );
    }

    for snr in [30.0, 20.0, 10.0] {
        let (noisy, clipped) = add_gaussian_noise(&clip, snr, 5).unwrap();
        let noise_power: f64 = noisy
            .samples
            .iter()
            .zip(&clip.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / noisy.samples.len() as f64;
        let realized = 10.0 * (clip.power() / noise_power).log10();
        println!("gaussian_noise {snr:5.1} dB: realized {realized:5.2} dB, clipped fraction {clipped:.4}");
    }
}
